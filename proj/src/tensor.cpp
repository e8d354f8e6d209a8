#include "hgt/tensor.hpp"

namespace hgt {

Activation activation_from_name(const std::string& name) {
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw Error::config("BadConfig", "unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::gelu: return "gelu";
        case Activation::relu: return "relu";
        default: return "identity";
    }
}

}  // namespace hgt
