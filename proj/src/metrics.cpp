#include "cupi/metrics.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cupi/errors.hpp"

namespace cupi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& out_dir, const std::string& name, std::string& path) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw IoError("metrics: cannot write " + path);
    return out;
}

}  // namespace

std::string write_metrics_csv(const std::vector<StepRecord>& steps, const std::string& out_dir) {
    std::string path;
    std::ofstream out = open_out(out_dir, "metrics.csv", path);
    out << "epoch,step,alpha,L_s,L_i,L_t,L_cls,L_Stl,L_Dis,total\n";
    char line[256];
    for (const auto& s : steps) {
        std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.epoch, s.step,
                      s.loss.alpha, s.loss.l_s, s.loss.l_i, s.loss.l_t, s.loss.l_cls, s.loss.l_stl,
                      s.loss.l_dis, s.loss.total);
        out << line;
    }
    if (!out) throw IoError("metrics: short write to " + path);
    return path;
}

std::string write_summary_json(const json& summary, const std::string& out_dir) {
    std::string path;
    std::ofstream out = open_out(out_dir, "summary.json", path);
    out << summary.dump(2) << "\n";
    return path;
}

json drop_report_to_json(const DropReport& r) {
    json targets_sl = json::object(), targets_m = json::object();
    for (const auto& [name, acc] : r.unauthorized_acc_sl) targets_sl[name] = acc;
    for (const auto& [name, acc] : r.unauthorized_acc_method) targets_m[name] = acc;
    return json{{"authorized", {{"sl", r.authorized_acc_sl}, {"method", r.authorized_acc_method}}},
                {"unauthorized", {{"sl", targets_sl}, {"method", targets_m}}},
                {"authorized_drop", {{"absolute", r.authorized_drop.absolute}, {"relative", r.authorized_drop.relative}}},
                {"unauthorized_drop",
                 {{"absolute", r.unauthorized_drop.absolute}, {"relative", r.unauthorized_drop.relative}}}};
}

std::string write_drop_report_csv(const DropReport& r, const std::string& out_dir) {
    std::string path;
    std::ofstream out = open_out(out_dir, "drop_report.csv", path);
    out << "role,authorized";
    for (const auto& [name, acc] : r.unauthorized_acc_sl) out << "," << name;
    out << "\nsl," << r.authorized_acc_sl;
    for (const auto& [name, acc] : r.unauthorized_acc_sl) out << "," << acc;
    out << "\nmethod," << r.authorized_acc_method;
    for (const auto& [name, acc] : r.unauthorized_acc_method) out << "," << acc;
    out << "\nauthorized_drop," << r.authorized_drop.absolute << " (" << r.authorized_drop.relative << "%)";
    out << "\nunauthorized_drop," << r.unauthorized_drop.absolute << " (" << r.unauthorized_drop.relative
        << "%)\n";
    return path;
}

std::string write_manifest(const RunManifest& manifest, const std::string& out_dir) {
    std::string path;
    std::ofstream out = open_out(out_dir, "manifest.json", path);
    json j{{"config_hash", manifest.config_hash},
           {"code_version", manifest.code_version},
           {"started_at", manifest.started_at},
           {"finished_at", manifest.finished_at},
           {"artifacts", manifest.artifacts}};
    out << j.dump(2) << "\n";
    return path;
}

ExportPaths export_metrics(const std::vector<StepRecord>& steps, const json& summary,
                           const std::string& out_dir, RunManifest manifest) {
    ExportPaths paths;
    paths.metrics_csv = write_metrics_csv(steps, out_dir);
    paths.summary_json = write_summary_json(summary, out_dir);
    manifest.artifacts.push_back(paths.metrics_csv);
    manifest.artifacts.push_back(paths.summary_json);
    if (manifest.finished_at.empty()) manifest.finished_at = iso8601_now();
    manifest.artifacts.push_back((fs::path(out_dir) / "manifest.json").string());
    paths.manifest_json = write_manifest(manifest, out_dir);
    return paths;
}

}  // namespace cupi
