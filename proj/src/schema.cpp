#include "hgt/schema.hpp"

#include <fstream>
#include <sstream>

#include "hgt/error.hpp"
#include "json.hpp"

namespace hgt {

NodeTypeId Schema::add_node_type(const std::string& name, int64_t feature_dim, bool is_event) {
    if (find_node_type(name) >= 0)
        throw Error::data("DuplicateType", "node type '" + name + "' declared twice");
    node_types_.push_back({name, feature_dim, is_event});
    return static_cast<NodeTypeId>(node_types_.size() - 1);
}

EdgeTypeId Schema::add_edge_type(const std::string& name, NodeTypeId src, NodeTypeId tgt,
                                 bool symmetric) {
    if (find_edge_type(name) >= 0)
        throw Error::data("DuplicateType", "edge type '" + name + "' declared twice");
    if (src < 0 || src >= num_node_types() || tgt < 0 || tgt >= num_node_types())
        throw Error::data("UnknownType", "edge type '" + name + "' references undeclared node type");
    EdgeTypeInfo info;
    info.name = name;
    info.src_type = src;
    info.tgt_type = tgt;
    info.symmetric = symmetric;
    if (symmetric) info.inverse = static_cast<EdgeTypeId>(edge_types_.size());
    edge_types_.push_back(info);
    return static_cast<EdgeTypeId>(edge_types_.size() - 1);
}

void Schema::bind_inverse(EdgeTypeId a, EdgeTypeId b) {
    auto& ea = edge_types_.at(a);
    auto& eb = edge_types_.at(b);
    if (ea.src_type != eb.tgt_type || ea.tgt_type != eb.src_type)
        throw Error::data("UnknownType", "inverse pair '" + ea.name + "'/'" + eb.name +
                                             "' does not swap source/target types");
    ea.inverse = b;
    eb.inverse = a;
}

void Schema::finalize_inverses() {
    const size_t declared = edge_types_.size();
    for (size_t e = 0; e < declared; ++e) {
        if (edge_types_[e].inverse >= 0) continue;
        const EdgeTypeInfo& fwd = edge_types_[e];
        EdgeTypeId rev = add_edge_type(fwd.name + "~rev", fwd.tgt_type, fwd.src_type, false);
        bind_inverse(static_cast<EdgeTypeId>(e), rev);
    }
}

void Schema::add_self_loop_types() {
    if (has_self_loops_) return;
    for (NodeTypeId t = 0; t < num_node_types(); ++t) {
        EdgeTypeId e = add_edge_type("self~" + node_types_[t].name, t, t, true);
        edge_types_[e].is_self_loop = true;
    }
    has_self_loops_ = true;
}

NodeTypeId Schema::find_node_type(const std::string& name) const {
    for (size_t i = 0; i < node_types_.size(); ++i)
        if (node_types_[i].name == name) return static_cast<NodeTypeId>(i);
    return -1;
}

EdgeTypeId Schema::find_edge_type(const std::string& name) const {
    for (size_t i = 0; i < edge_types_.size(); ++i)
        if (edge_types_[i].name == name) return static_cast<EdgeTypeId>(i);
    return -1;
}

NodeTypeId Schema::node_type(const std::string& name) const {
    NodeTypeId t = find_node_type(name);
    if (t < 0) throw Error::data("UnknownType", "unknown node type '" + name + "'");
    return t;
}

EdgeTypeId Schema::edge_type(const std::string& name) const {
    EdgeTypeId e = find_edge_type(name);
    if (e < 0) throw Error::data("UnknownType", "unknown edge type '" + name + "'");
    return e;
}

std::vector<MetaRelation> Schema::relations() const {
    std::vector<MetaRelation> out;
    out.reserve(edge_types_.size());
    for (EdgeTypeId e = 0; e < num_edge_types(); ++e) out.push_back(relation(e));
    return out;
}

std::string Schema::to_json() const {
    nlohmann::json j;
    j["node_types"] = nlohmann::json::array();
    for (const auto& nt : node_types_) {
        j["node_types"].push_back({{"name", nt.name},
                                   {"feature_dim", nt.feature_dim},
                                   {"is_event", nt.is_event}});
    }
    j["edge_types"] = nlohmann::json::array();
    for (const auto& et : edge_types_) {
        nlohmann::json e = {{"name", et.name},
                            {"src", node_types_.at(et.src_type).name},
                            {"tgt", node_types_.at(et.tgt_type).name},
                            {"symmetric", et.symmetric}};
        if (!et.symmetric && et.inverse >= 0) e["inverse"] = edge_types_.at(et.inverse).name;
        if (et.is_self_loop) e["self_loop"] = true;
        j["edge_types"].push_back(e);
    }
    j["self_loops"] = has_self_loops_;
    return j.dump(2) + "\n";
}

Schema Schema::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error::config("BadSchema", std::string("schema is not valid JSON: ") + e.what());
    }
    Schema s;
    if (!j.contains("node_types") || !j.contains("edge_types"))
        throw Error::config("BadSchema", "schema needs node_types and edge_types arrays");
    for (const auto& nt : j["node_types"]) {
        s.add_node_type(nt.at("name").get<std::string>(), nt.value("feature_dim", int64_t{0}),
                        nt.value("is_event", false));
    }
    for (const auto& et : j["edge_types"]) {
        EdgeTypeId e = s.add_edge_type(et.at("name").get<std::string>(),
                                       s.node_type(et.at("src").get<std::string>()),
                                       s.node_type(et.at("tgt").get<std::string>()),
                                       et.value("symmetric", false));
        if (et.value("self_loop", false)) s.edge_types_[e].is_self_loop = true;
    }
    // second pass: explicit inverse names
    for (const auto& et : j["edge_types"]) {
        if (!et.contains("inverse")) continue;
        EdgeTypeId a = s.edge_type(et.at("name").get<std::string>());
        EdgeTypeId b = s.edge_type(et.at("inverse").get<std::string>());
        if (s.edge_types_[a].inverse < 0 || s.edge_types_[a].inverse == b) s.bind_inverse(a, b);
    }
    s.finalize_inverses();
    s.has_self_loops_ = j.value("self_loops", false);
    return s;
}

Schema Schema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::config("MissingFile", "cannot open schema file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void Schema::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error::data("WriteFailed", "cannot write schema file '" + path + "'");
    out << to_json();
}

uint64_t Schema::hash() const {
    std::string text = to_json();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hgt
