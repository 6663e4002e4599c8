#pragma once

#include <cstdint>
#include <string>

#include "cupi/backbone.hpp"
#include "cupi/generator.hpp"

namespace cupi {

struct Provenance {
    std::string mode = "untrained";
    std::uint64_t seed = 0;
    int epochs = 0;
};

// Everything a trained run produces: backbone parameters, generator
// parameters and the configuration they were built for.
struct ModelBundle {
    ModelParams params;
    GeneratorParams gen;
    BackboneConfig config;
    Provenance provenance;
};

ModelBundle make_bundle(const BackboneConfig& cfg);

}  // namespace cupi
