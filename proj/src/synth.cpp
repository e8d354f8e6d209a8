#include "hgt/synth.hpp"

#include <algorithm>
#include <numeric>
#include <filesystem>
#include <fstream>

#include "hgt/error.hpp"
#include "hgt/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace hgt {

SynthConfig toy_academic_config() {
    SynthConfig cfg;
    cfg.papers = 40;
    cfg.authors = 25;
    cfg.venues = 5;
    cfg.fields = 10;
    cfg.institutes = 3;
    cfg.classes = 5;
    cfg.correlation = 0.9;
    cfg.cites_per_paper = 3;
    cfg.fields_per_paper = 2;
    cfg.authors_per_paper = 2;
    cfg.time_range = 100;
    cfg.seed = 0;
    return cfg;
}

std::string synth_config_json(const SynthConfig& c) {
    nlohmann::json j;
    j["papers"] = c.papers;
    j["authors"] = c.authors;
    j["fields"] = c.fields;
    j["venues"] = c.venues;
    j["institutes"] = c.institutes;
    j["classes"] = c.classes;
    j["correlation"] = c.correlation;
    j["cites_per_paper"] = c.cites_per_paper;
    j["fields_per_paper"] = c.fields_per_paper;
    j["authors_per_paper"] = c.authors_per_paper;
    j["time_range"] = c.time_range;
    j["seed"] = c.seed;
    return j.dump(2) + "\n";
}

SynthConfig synth_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error::config("BadConfig", std::string("synth config: ") + e.what());
    }
    SynthConfig c;
    c.papers = j.value("papers", c.papers);
    c.authors = j.value("authors", c.authors);
    c.fields = j.value("fields", c.fields);
    c.venues = j.value("venues", c.venues);
    c.institutes = j.value("institutes", c.institutes);
    c.classes = j.value("classes", c.classes);
    c.correlation = j.value("correlation", c.correlation);
    c.cites_per_paper = j.value("cites_per_paper", c.cites_per_paper);
    c.fields_per_paper = j.value("fields_per_paper", c.fields_per_paper);
    c.authors_per_paper = j.value("authors_per_paper", c.authors_per_paper);
    c.time_range = j.value("time_range", c.time_range);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

void write_features(const std::string& path, const std::vector<float>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::data("WriteFailed", "cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::vector<float> noise_features(int64_t rows, int64_t dim, CounterRng& rng) {
    std::vector<float> out(static_cast<size_t>(rows * dim));
    for (auto& v : out) v = static_cast<float>(rng.next_normal());
    return out;
}

}  // namespace

void write_synth_graph(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.classes < 1 || cfg.papers < 1)
        throw Error::config("BadConfig", "synth needs classes >= 1 and papers >= 1");
    fs::create_directories(out_dir);

    nlohmann::json schema;
    schema["node_types"] = {
        {{"name", "paper"}, {"feature_dim", cfg.paper_feature_dim}, {"is_event", true}},
        {{"name", "author"}, {"feature_dim", cfg.author_feature_dim}, {"is_event", false}},
        {{"name", "field"}, {"feature_dim", cfg.fields}, {"is_event", false}},
        {{"name", "venue"}, {"feature_dim", cfg.venue_feature_dim}, {"is_event", false}},
        {{"name", "institute"}, {"feature_dim", cfg.institute_feature_dim}, {"is_event", false}}};
    schema["edge_types"] = {
        {{"name", "cites"}, {"src", "paper"}, {"tgt", "paper"}, {"symmetric", false}},
        {{"name", "writes"}, {"src", "author"}, {"tgt", "paper"}, {"symmetric", false}},
        {{"name", "in_field"}, {"src", "paper"}, {"tgt", "field"}, {"symmetric", false}},
        {{"name", "published_in"}, {"src", "paper"}, {"tgt", "venue"}, {"symmetric", false}},
        {{"name", "affiliated_with"}, {"src", "author"}, {"tgt", "institute"}, {"symmetric", false}}};
    {
        std::ofstream out(out_dir + "/schema.json");
        out << schema.dump(2) << "\n";
    }

    CounterRng rng = CounterRng::split(cfg.seed, "synth");

    std::vector<Timestamp> paper_time(cfg.papers);
    std::vector<int64_t> paper_class(cfg.papers), author_class(cfg.authors);
    for (auto& t : paper_time)
        t = static_cast<Timestamp>(rng.next_below(static_cast<uint64_t>(cfg.time_range)));
    for (auto& c : paper_class) c = static_cast<int64_t>(rng.next_below(cfg.classes));
    for (auto& c : author_class) c = static_cast<int64_t>(rng.next_below(cfg.classes));

    // Per-class paper lists ordered by timestamp for "cite an earlier paper".
    std::vector<std::vector<int64_t>> papers_by_class(cfg.classes);
    std::vector<int64_t> papers_by_time(cfg.papers);
    for (int64_t p = 0; p < cfg.papers; ++p) papers_by_class[paper_class[p]].push_back(p);
    std::iota(papers_by_time.begin(), papers_by_time.end(), 0);
    auto by_time = [&](int64_t a, int64_t b) {
        return paper_time[a] != paper_time[b] ? paper_time[a] < paper_time[b] : a < b;
    };
    std::sort(papers_by_time.begin(), papers_by_time.end(), by_time);
    for (auto& list : papers_by_class) std::sort(list.begin(), list.end(), by_time);

    std::vector<std::vector<int64_t>> authors_by_class(cfg.classes);
    for (int64_t a = 0; a < cfg.authors; ++a) authors_by_class[author_class[a]].push_back(a);

    auto earlier_in = [&](const std::vector<int64_t>& sorted, Timestamp t) -> int64_t {
        // count of entries with time strictly below t
        int64_t lo = 0, hi = static_cast<int64_t>(sorted.size());
        while (lo < hi) {
            int64_t mid = (lo + hi) / 2;
            if (paper_time[sorted[mid]] < t)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    };

    std::ofstream nodes(out_dir + "/nodes.tsv");
    nodes << "type\tlocal_id\ttimestamp\n";
    for (int64_t p = 0; p < cfg.papers; ++p)
        nodes << "paper\t" << p << "\t" << paper_time[p] << "\n";
    for (int64_t a = 0; a < cfg.authors; ++a) nodes << "author\t" << a << "\t\n";
    for (int64_t f = 0; f < cfg.fields; ++f) nodes << "field\t" << f << "\t\n";
    for (int64_t v = 0; v < cfg.venues; ++v) nodes << "venue\t" << v << "\t\n";
    for (int64_t i = 0; i < cfg.institutes; ++i) nodes << "institute\t" << i << "\t\n";

    std::ofstream edges(out_dir + "/edges.tsv");
    edges << "edge_type\tsrc_type\tsrc_id\ttgt_type\ttgt_id\ttimestamp\n";
    auto aligned = [&](double corr) { return rng.next_double() < corr; };

    for (int64_t p = 0; p < cfg.papers; ++p) {
        const int64_t cls = paper_class[p];
        const Timestamp t = paper_time[p];
        for (int64_t c = 0; c < cfg.cites_per_paper; ++c) {
            const auto& pool = aligned(cfg.correlation) ? papers_by_class[cls] : papers_by_time;
            int64_t limit = earlier_in(pool, t);
            if (limit == 0) continue;
            int64_t cited = pool[rng.next_below(static_cast<uint64_t>(limit))];
            edges << "cites\tpaper\t" << p << "\tpaper\t" << cited << "\t" << t << "\n";
        }
        for (int64_t k = 0; k < cfg.fields_per_paper; ++k) {
            int64_t field;
            if (aligned(cfg.correlation)) {
                // fields carrying this class: ids f with f % classes == cls
                int64_t count = (cfg.fields - 1 - cls) / cfg.classes + 1;
                field = cls + cfg.classes * static_cast<int64_t>(
                                                 rng.next_below(static_cast<uint64_t>(count)));
            } else {
                field = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cfg.fields)));
            }
            edges << "in_field\tpaper\t" << p << "\tfield\t" << field << "\t" << t << "\n";
        }
        if (cfg.venues > 0) {
            int64_t venue;
            if (aligned(cfg.correlation) && cls < cfg.venues) {
                int64_t count = (cfg.venues - 1 - cls) / cfg.classes + 1;
                venue = cls + cfg.classes * static_cast<int64_t>(
                                                rng.next_below(static_cast<uint64_t>(count)));
            } else {
                venue = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cfg.venues)));
            }
            edges << "published_in\tpaper\t" << p << "\tvenue\t" << venue << "\t" << t << "\n";
        }
        for (int64_t k = 0; k < cfg.authors_per_paper && cfg.authors > 0; ++k) {
            const auto& pool =
                aligned(cfg.correlation) && !authors_by_class[cls].empty() ? authors_by_class[cls]
                                                                           : std::vector<int64_t>{};
            int64_t author =
                pool.empty()
                    ? static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cfg.authors)))
                    : pool[rng.next_below(static_cast<uint64_t>(pool.size()))];
            edges << "writes\tauthor\t" << author << "\tpaper\t" << p << "\t" << t << "\n";
        }
    }
    for (int64_t a = 0; a < cfg.authors && cfg.institutes > 0; ++a) {
        int64_t inst = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(cfg.institutes)));
        edges << "affiliated_with\tauthor\t" << a << "\tinstitute\t" << inst << "\t0\n";
    }

    write_features(out_dir + "/features.paper.f32",
                   noise_features(cfg.papers, cfg.paper_feature_dim, rng));
    write_features(out_dir + "/features.author.f32",
                   noise_features(cfg.authors, cfg.author_feature_dim, rng));
    {
        std::vector<float> one_hot(static_cast<size_t>(cfg.fields * cfg.fields), 0.0f);
        for (int64_t f = 0; f < cfg.fields; ++f) one_hot[f * cfg.fields + f] = 1.0f;
        write_features(out_dir + "/features.field.f32", one_hot);
    }
    write_features(out_dir + "/features.venue.f32",
                   noise_features(cfg.venues, cfg.venue_feature_dim, rng));
    write_features(out_dir + "/features.institute.f32",
                   noise_features(cfg.institutes, cfg.institute_feature_dim, rng));

    std::ofstream labels(out_dir + "/labels.paper.tsv");
    for (int64_t p = 0; p < cfg.papers; ++p) labels << p << "\t" << paper_class[p] << "\n";

    std::ofstream meta(out_dir + "/synth.json");
    meta << synth_config_json(cfg);
}

}  // namespace hgt
