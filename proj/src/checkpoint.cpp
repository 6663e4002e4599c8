#include "cupi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

#include "cupi/errors.hpp"

namespace cupi {

using nlohmann::json;

namespace {

struct ArrayRef {
    std::string name;
    std::vector<long> shape;
    const double* read = nullptr;
    double* write = nullptr;
    std::size_t size = 0;
};

std::size_t shape_size(const std::vector<long>& shape) {
    std::size_t n = 1;
    for (long d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

json config_to_json(const BackboneConfig& c) {
    return json{{"levels", c.levels},        {"widths", c.widths},
                {"bottleneck_dim", c.bottleneck_dim}, {"num_classes", c.num_classes},
                {"in_h", c.in_h},            {"in_w", c.in_w},
                {"in_c", c.in_c},            {"seed", c.seed}};
}

BackboneConfig config_from_json(const json& j) {
    BackboneConfig c;
    c.levels = j.at("levels").get<int>();
    c.widths = j.at("widths").get<std::vector<int>>();
    c.bottleneck_dim = j.at("bottleneck_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.in_h = j.at("in_h").get<int>();
    c.in_w = j.at("in_w").get<int>();
    c.in_c = j.at("in_c").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

std::vector<ArrayRef> bundle_arrays(ModelBundle& b, bool writable) {
    std::vector<ArrayRef> arrays;
    auto add = [&](const std::string& name, std::vector<long> shape, const double* r, double* w) {
        ArrayRef a;
        a.name = name;
        a.shape = std::move(shape);
        a.read = r;
        a.write = w;
        a.size = shape_size(a.shape);
        arrays.push_back(std::move(a));
    };
    for (std::size_t l = 0; l < b.params.blocks.size(); ++l) {
        auto& blk = b.params.blocks[l];
        const std::string base = "backbone.block" + std::to_string(l + 1) + ".conv.";
        add(base + "weight", {blk.out_c, blk.in_c, 3, 3}, blk.weight.data(), writable ? blk.weight.data() : nullptr);
        add(base + "bias", {blk.out_c}, blk.bias.data(), writable ? blk.bias.data() : nullptr);
    }
    add("bottleneck.weight", {b.params.bottleneck.weight.rows(), b.params.bottleneck.weight.cols()},
        b.params.bottleneck.weight.data(), writable ? b.params.bottleneck.weight.data() : nullptr);
    add("bottleneck.bias", {b.params.bottleneck.bias.size()}, b.params.bottleneck.bias.data(),
        writable ? b.params.bottleneck.bias.data() : nullptr);
    add("classifier.weight", {b.params.classifier.weight.rows(), b.params.classifier.weight.cols()},
        b.params.classifier.weight.data(), writable ? b.params.classifier.weight.data() : nullptr);
    add("classifier.bias", {b.params.classifier.bias.size()}, b.params.classifier.bias.data(),
        writable ? b.params.classifier.bias.data() : nullptr);
    for (std::size_t l = 0; l < b.gen.levels.size(); ++l) {
        auto& g = b.gen.levels[l];
        const std::string base = "gen.l" + std::to_string(l + 1) + ".";
        add(base + "mu.weight", {g.mu_map.weight.rows(), g.mu_map.weight.cols()}, g.mu_map.weight.data(),
            writable ? g.mu_map.weight.data() : nullptr);
        add(base + "mu.bias", {g.mu_map.bias.size()}, g.mu_map.bias.data(), writable ? g.mu_map.bias.data() : nullptr);
        add(base + "sigma.weight", {g.sigma_map.weight.rows(), g.sigma_map.weight.cols()}, g.sigma_map.weight.data(),
            writable ? g.sigma_map.weight.data() : nullptr);
        add(base + "sigma.bias", {g.sigma_map.bias.size()}, g.sigma_map.bias.data(),
            writable ? g.sigma_map.bias.data() : nullptr);
    }
    return arrays;
}

void write_container(const std::string& path, const json& header_extra, const std::vector<ArrayRef>& arrays) {
    json dir = json::array();
    std::size_t offset = 0;
    for (const auto& a : arrays) {
        dir.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"dtype", "f32"}});
        offset += a.size * sizeof(float);
    }
    json header = header_extra;
    header["version"] = kCheckpointVersion;
    header["arrays"] = dir;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + path);
    out.write("CUPK", 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    std::vector<float> buf;
    for (const auto& a : arrays) {
        buf.resize(a.size);
        for (std::size_t k = 0; k < a.size; ++k) buf[k] = static_cast<float>(a.read[k]);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("checkpoint: short write to " + path);
}

json read_container(const std::string& path, std::vector<char>& payload) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CUPK", 4) != 0) {
        throw FormatError("checkpoint: bad magic in " + path);
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    std::uint64_t hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&hlen), 8)) throw FormatError("checkpoint: truncated header length");
    std::string htext(hlen, '\0');
    if (!in.read(htext.data(), static_cast<std::streamsize>(hlen))) {
        throw FormatError("checkpoint: truncated header");
    }
    json header = json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw FormatError("checkpoint: header is not valid JSON");
    payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return header;
}

void fill_arrays(const json& header, const std::vector<char>& payload, std::vector<ArrayRef>& arrays) {
    for (auto& a : arrays) {
        const json* entry = nullptr;
        for (const auto& e : header.at("arrays")) {
            if (e.at("name").get<std::string>() == a.name) {
                entry = &e;
                break;
            }
        }
        if (!entry) throw FormatError("checkpoint: missing array " + a.name);
        const std::size_t offset = entry->at("offset").get<std::size_t>();
        if (offset + a.size * sizeof(float) > payload.size()) {
            throw FormatError("checkpoint: truncated payload for " + a.name);
        }
        const float* src = reinterpret_cast<const float*>(payload.data() + offset);
        for (std::size_t k = 0; k < a.size; ++k) a.write[k] = static_cast<double>(src[k]);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
    json header;
    header["config"] = config_to_json(bundle.config);
    header["provenance"] = {{"mode", bundle.provenance.mode},
                            {"seed", bundle.provenance.seed},
                            {"epochs", bundle.provenance.epochs}};
    auto arrays = bundle_arrays(const_cast<ModelBundle&>(bundle), false);
    write_container(path, header, arrays);
}

ModelBundle load_checkpoint(const std::string& path) {
    std::vector<char> payload;
    json header = read_container(path, payload);
    ModelBundle b = make_bundle(config_from_json(header.at("config")));
    if (header.contains("provenance")) {
        b.provenance.mode = header["provenance"].value("mode", "untrained");
        b.provenance.seed = header["provenance"].value("seed", std::uint64_t{0});
        b.provenance.epochs = header["provenance"].value("epochs", 0);
    }
    auto arrays = bundle_arrays(b, true);
    fill_arrays(header, payload, arrays);
    return b;
}

void save_dimb_snapshot(const std::string& path, const DIMBState& state, const BackboneConfig& cfg) {
    state.require_initialized();
    std::vector<ArrayRef> arrays;
    std::vector<std::vector<double>> label_buffers;
    auto add = [&](const std::string& name, const Mat& m) {
        ArrayRef a;
        a.name = name;
        a.shape = {m.rows(), m.cols()};
        a.read = m.data();
        a.size = shape_size(a.shape);
        arrays.push_back(std::move(a));
    };
    for (std::size_t l = 0; l < state.levels.size(); ++l) {
        const std::string base = "dimb.l" + std::to_string(l + 1) + ".";
        add(base + "mu.samples", state.levels[l].mu_samples.rows);
        add(base + "mu.centers", state.levels[l].mu_centers.centers);
        add(base + "sigma.samples", state.levels[l].sigma_samples.rows);
        add(base + "sigma.centers", state.levels[l].sigma_centers.centers);
    }
    add("dimb.d.samples", state.bottleneck_samples.rows);
    add("dimb.d.centers", state.bottleneck_centers.centers);
    // labels ride along so a snapshot can be reloaded standalone
    label_buffers.emplace_back(state.levels.empty() ? std::vector<double>{}
                                                    : std::vector<double>(state.levels[0].mu_samples.labels.begin(),
                                                                          state.levels[0].mu_samples.labels.end()));
    label_buffers.emplace_back(state.bottleneck_samples.labels.begin(), state.bottleneck_samples.labels.end());
    ArrayRef sl;
    sl.name = "dimb.s.labels";
    sl.shape = {static_cast<long>(label_buffers[0].size())};
    sl.read = label_buffers[0].data();
    sl.size = label_buffers[0].size();
    arrays.push_back(sl);
    ArrayRef tl;
    tl.name = "dimb.d.labels";
    tl.shape = {static_cast<long>(label_buffers[1].size())};
    tl.read = label_buffers[1].data();
    tl.size = label_buffers[1].size();
    arrays.push_back(tl);

    json header;
    header["kind"] = "dimb";
    header["config"] = config_to_json(cfg);
    header["num_classes"] = state.num_classes;
    write_container(path, header, arrays);
}

DIMBState load_dimb_snapshot(const std::string& path) {
    std::vector<char> payload;
    json header = read_container(path, payload);
    if (header.value("kind", "") != "dimb") throw FormatError("checkpoint: not a bank snapshot: " + path);
    const BackboneConfig cfg = config_from_json(header.at("config"));

    auto dims = [&](const std::string& name) -> std::vector<long> {
        for (const auto& e : header.at("arrays")) {
            if (e.at("name").get<std::string>() == name) return e.at("shape").get<std::vector<long>>();
        }
        throw FormatError("checkpoint: missing array " + name);
    };
    const long n_s = dims("dimb.s.labels")[0];
    const long n_t = dims("dimb.d.labels")[0];

    std::vector<double> labels_s(n_s), labels_t(n_t);
    {
        std::vector<ArrayRef> label_arrays(2);
        label_arrays[0].name = "dimb.s.labels";
        label_arrays[0].shape = {n_s};
        label_arrays[0].write = labels_s.data();
        label_arrays[0].size = static_cast<std::size_t>(n_s);
        label_arrays[1].name = "dimb.d.labels";
        label_arrays[1].shape = {n_t};
        label_arrays[1].write = labels_t.data();
        label_arrays[1].size = static_cast<std::size_t>(n_t);
        fill_arrays(header, payload, label_arrays);
    }
    std::vector<int> ls(labels_s.begin(), labels_s.end()), lt(labels_t.begin(), labels_t.end());

    DIMBState state = make_dimb(cfg, static_cast<int>(n_s), static_cast<int>(n_t), ls, lt);
    std::vector<ArrayRef> arrays;
    auto add = [&](const std::string& name, Mat& m) {
        ArrayRef a;
        a.name = name;
        a.shape = {m.rows(), m.cols()};
        a.write = m.data();
        a.size = shape_size(a.shape);
        arrays.push_back(std::move(a));
    };
    for (std::size_t l = 0; l < state.levels.size(); ++l) {
        const std::string base = "dimb.l" + std::to_string(l + 1) + ".";
        add(base + "mu.samples", state.levels[l].mu_samples.rows);
        add(base + "mu.centers", state.levels[l].mu_centers.centers);
        add(base + "sigma.samples", state.levels[l].sigma_samples.rows);
        add(base + "sigma.centers", state.levels[l].sigma_centers.centers);
    }
    add("dimb.d.samples", state.bottleneck_samples.rows);
    add("dimb.d.centers", state.bottleneck_centers.centers);
    fill_arrays(header, payload, arrays);
    for (auto& lb : state.levels) {
        std::fill(lb.mu_samples.filled.begin(), lb.mu_samples.filled.end(), 1);
        std::fill(lb.sigma_samples.filled.begin(), lb.sigma_samples.filled.end(), 1);
    }
    std::fill(state.bottleneck_samples.filled.begin(), state.bottleneck_samples.filled.end(), 1);
    state.initialized = true;
    return state;
}

}  // namespace cupi
