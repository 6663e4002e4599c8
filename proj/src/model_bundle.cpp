#include "cupi/model_bundle.hpp"

namespace cupi {

ModelBundle make_bundle(const BackboneConfig& cfg) {
    ModelBundle b;
    b.config = cfg;
    b.params = init_model(cfg);
    b.gen = init_generator(cfg);
    return b;
}

}  // namespace cupi
