#include "hgt/params.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace hgt {

namespace {

nlohmann::json read_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw Error::data("MissingFile", "no checkpoint manifest in '" + dir + "'");
    return nlohmann::json::parse(in);
}

}  // namespace

template <class Real>
void ParamStoreT<Real>::save(const std::string& dir, uint64_t config_hash, uint64_t seed) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["dtype"] = dtype_name<Real>();
    manifest["config_hash"] = config_hash;
    manifest["seed"] = seed;
    auto tensors = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& t : list_) {
        nlohmann::json entry;
        entry["name"] = t->name;
        auto shape = nlohmann::json::array();
        for (int i = 0; i < t->shape.rank; ++i) shape.push_back(t->shape.dim[i]);
        entry["shape"] = shape;
        entry["dtype"] = dtype_name<Real>();
        entry["offset"] = offset;
        tensors.push_back(entry);
        offset += t->numel() * static_cast<int64_t>(sizeof(Real));
    }
    manifest["tensors"] = tensors;
    {
        std::ofstream out(dir + "/manifest.json");
        if (!out) throw Error::data("WriteFailed", "cannot write '" + dir + "/manifest.json'");
        out << manifest.dump(2) << "\n";
    }
    std::ofstream bin(dir + "/params.bin", std::ios::binary);
    if (!bin) throw Error::data("WriteFailed", "cannot write '" + dir + "/params.bin'");
    for (const auto& t : list_)
        bin.write(reinterpret_cast<const char*>(t->v.data()),
                  static_cast<std::streamsize>(t->v.size() * sizeof(Real)));
}

template <class Real>
void ParamStoreT<Real>::load(const std::string& dir) {
    nlohmann::json manifest = read_manifest(dir);
    if (manifest.value("dtype", "") != dtype_name<Real>())
        throw Error::data("DtypeMismatch", "checkpoint dtype is " + manifest.value("dtype", "?") +
                                               ", store wants " + dtype_name<Real>());
    std::ifstream bin(dir + "/params.bin", std::ios::binary);
    if (!bin) throw Error::data("MissingFile", "no params.bin in '" + dir + "'");
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != list_.size())
        throw Error::data("SchemaMismatch", "checkpoint has " + std::to_string(tensors.size()) +
                                                " tensors, store declares " +
                                                std::to_string(list_.size()));
    for (size_t i = 0; i < list_.size(); ++i) {
        const auto& entry = tensors[i];
        auto& t = *list_[i];
        if (entry.at("name").get<std::string>() != t.name)
            throw Error::data("SchemaMismatch", "tensor " + std::to_string(i) + " is '" +
                                                    entry.at("name").get<std::string>() +
                                                    "', store declares '" + t.name + "'");
        Shape shape;
        shape.rank = static_cast<int>(entry.at("shape").size());
        for (int k = 0; k < shape.rank; ++k) shape.dim[k] = entry.at("shape")[k].get<int64_t>();
        if (!(shape == t.shape))
            throw Error::data("SchemaMismatch", "tensor '" + t.name + "' shape " + shape.str() +
                                                    " != declared " + t.shape.str());
        bin.seekg(entry.at("offset").get<int64_t>());
        bin.read(reinterpret_cast<char*>(t.v.data()),
                 static_cast<std::streamsize>(t.v.size() * sizeof(Real)));
        if (!bin) throw Error::data("BadCheckpoint", "short read for tensor '" + t.name + "'");
    }
}

template <class Real>
std::string ParamStoreT<Real>::stored_dtype(const std::string& dir) {
    return read_manifest(dir).value("dtype", "f64");
}

template <class Real>
uint64_t ParamStoreT<Real>::stored_config_hash(const std::string& dir) {
    return read_manifest(dir).value("config_hash", uint64_t{0});
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;

}  // namespace hgt
