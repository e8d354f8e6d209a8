#pragma once

#include <cstdint>
#include <string>

#include "hgt/graph.hpp"

namespace hgt {

// Planted-class academic-style generator. Paper classes correlate with
// neighborhood composition: with probability `correlation` a paper cites
// papers, attaches to fields/venues and is written by authors of its own
// class, otherwise the endpoint is uniform. Field j carries class j % classes
// and a one-hot feature row; paper/author/venue/institute features are noise.
struct SynthConfig {
    int64_t papers = 1000;
    int64_t authors = 600;
    int64_t fields = 10;
    int64_t venues = 20;
    int64_t institutes = 3;
    int64_t classes = 5;
    double correlation = 0.9;
    int64_t paper_feature_dim = 16;
    int64_t author_feature_dim = 8;
    int64_t venue_feature_dim = 4;
    int64_t institute_feature_dim = 4;
    int64_t cites_per_paper = 4;
    int64_t fields_per_paper = 2;
    int64_t authors_per_paper = 2;
    Timestamp time_range = 100;  // paper timestamps are uniform in [0, time_range)
    uint64_t seed = 0;
};

// Writes schema.json, nodes.tsv, edges.tsv, features.<type>.f32 and
// labels.paper.tsv into out_dir. Deterministic in cfg.seed.
void write_synth_graph(const SynthConfig& cfg, const std::string& out_dir);

// The bundled toy academic fixture: 40 papers, 25 authors, 5 venues,
// 10 fields, 3 institutes.
SynthConfig toy_academic_config();

std::string synth_config_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text);

}  // namespace hgt
