#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccp/ccp.hpp"
#include "ccp/config.hpp"
#include "ccp/metrics.hpp"

namespace ccp {

namespace detail {

// shortest round-trippable decimal
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
        os << content;
        if (!os) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline const char* kTraceHeader =
    "step,projection,train_loss,val_p_at_1,val_p_at_r,val_map_at_r,"
    "violation_rate,avg_cover_radius,min_proxy_dist";

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream os;
    os << kTraceHeader << "\n";
    for (const TraceRow& r : trace) {
        os << r.step << ',' << r.projection << ',' << detail::fmt_double(r.train_loss) << ','
           << detail::fmt_double(r.val_p_at_1) << ',' << detail::fmt_double(r.val_p_at_r) << ','
           << detail::fmt_double(r.val_map_at_r) << ','
           << detail::fmt_double(r.violation_rate) << ','
           << detail::fmt_double(r.avg_covering_radius) << ','
           << detail::fmt_double(r.min_proxy_distance) << "\n";
    }
    return os.str();
}

inline std::vector<TraceRow> parse_trace_csv(const std::string& csv) {
    std::stringstream ss(csv);
    std::string line;
    if (!std::getline(ss, line) || line != kTraceHeader)
        throw std::runtime_error("trace.csv: unexpected header");
    std::vector<TraceRow> rows;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ls, tok, ',')) toks.push_back(tok);
        if (toks.size() != 9) throw std::runtime_error("trace.csv: malformed row");
        TraceRow r;
        r.step = std::stoull(toks[0]);
        r.projection = std::stoull(toks[1]);
        r.train_loss = std::stod(toks[2]);
        r.val_p_at_1 = std::stod(toks[3]);
        r.val_p_at_r = std::stod(toks[4]);
        r.val_map_at_r = std::stod(toks[5]);
        r.violation_rate = std::stod(toks[6]);
        r.avg_covering_radius = std::stod(toks[7]);
        r.min_proxy_distance = std::stod(toks[8]);
        rows.push_back(r);
    }
    return rows;
}

struct ExperimentOutput {
    TrainResult result;
    RetrievalReport final_report;  // on the validation split, best checkpoint
    double wall_seconds = 0.0;
};

// Executes the configured mode and writes trace.csv, summary.json and
// embeddings.csv into out_dir.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    Dataset ds = load_dataset(cfg);
    TrainConfig tc = make_train_config(cfg);
    if (tc.net_dims.front() != ds.input_dim())
        throw std::invalid_argument("config: net input dim " + std::to_string(tc.net_dims.front()) +
                                    " != data dim " + std::to_string(ds.input_dim()));

    TrainResult result = run_ccp(tc, ds);

    const Matrix val_emb = [&] {
        Matrix m(ds.val_indices.size(), result.net.output_dim());
        for (std::size_t i = 0; i < ds.val_indices.size(); ++i)
            m.set_row(i, forward(result.net, ds.inputs.row_vec(ds.val_indices[i])));
        return m;
    }();
    std::vector<int> val_labels;
    for (std::size_t i : ds.val_indices) val_labels.push_back(ds.labels[i]);

    ExperimentOutput out;
    out.result = std::move(result);
    out.final_report = evaluate(val_emb, val_labels);
    out.final_report.violation_beta = cfg.violation_beta;
    out.final_report.violation_rate = violation_rate(val_emb, val_labels, cfg.violation_beta);
    out.final_report.avg_covering_radius =
        detail::mean_class_covering_radius(val_emb, val_labels);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::filesystem::create_directories(cfg.out_dir);
    detail::atomic_write(cfg.out_dir + "/trace.csv", trace_to_csv(out.result.trace));

    // embeddings.csv: every sample through the best checkpoint, with split tag
    {
        std::ostringstream os;
        os << "index,label,split";
        for (std::size_t d = 0; d < out.result.net.output_dim(); ++d) os << ",e" << d;
        os << "\n";
        std::vector<char> split_of(ds.size(), 't');
        for (std::size_t i : ds.val_indices) split_of[i] = 'v';
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const Vec e = forward(out.result.net, ds.inputs.row_vec(i));
            os << i << ',' << ds.labels[i] << ',' << (split_of[i] == 'v' ? "val" : "train");
            for (double v : e) os << ',' << detail::fmt_double(v);
            os << "\n";
        }
        detail::atomic_write(cfg.out_dir + "/embeddings.csv", os.str());
    }

    {
        nlohmann::json j;
        j["config"] = config_to_text(cfg);
        j["mode"] = cfg.mode;
        j["seed"] = cfg.seed;
        j["wall_seconds"] = out.wall_seconds;
        j["total_steps"] = out.result.total_steps;
        j["projections"] = out.result.projections.size();
        j["best_val_map_at_r"] = out.result.best_val_map_at_r;
        j["final"]["p_at_1"] = out.final_report.p_at_1;
        j["final"]["p_at_r"] = out.final_report.p_at_r;
        j["final"]["map_at_r"] = out.final_report.map_at_r;
        j["final"]["violation_rate"] = out.final_report.violation_rate;
        j["final"]["violation_beta"] = out.final_report.violation_beta;
        j["final"]["induced_epsilon_alpha"] = cfg.markov_alpha;
        j["final"]["avg_covering_radius"] = out.final_report.avg_covering_radius;
        j["data"]["kind"] = cfg.data_kind;
        j["data"]["classes"] = cfg.data_kind == "synth" ? cfg.synth_classes : -1;
        detail::atomic_write(cfg.out_dir + "/summary.json", j.dump(2) + "\n");
    }

    save_checkpoint(out.result.net, cfg.out_dir + "/net.ckpt");
    return out;
}

// Metric deltas between two summary.json files; positive delta favors b.
inline nlohmann::json compare_summaries(const std::string& path_a, const std::string& path_b) {
    auto load = [](const std::string& p) {
        std::ifstream is(p);
        if (!is) throw std::runtime_error("cannot open summary: " + p);
        return nlohmann::json::parse(is);
    };
    const nlohmann::json a = load(path_a);
    const nlohmann::json b = load(path_b);

    nlohmann::json out;
    out["a"] = path_a;
    out["b"] = path_b;
    if (a["data"] != b["data"]) out["warning"] = "dataset specs differ";
    for (const char* metric : {"p_at_1", "p_at_r", "map_at_r"}) {
        const double va = a["final"][metric].get<double>();
        const double vb = b["final"][metric].get<double>();
        out["delta"][metric] = vb - va;
        out["winner"][metric] = vb > va ? "b" : (va > vb ? "a" : "tie");
    }
    for (const char* metric : {"violation_rate", "avg_covering_radius"}) {
        const double va = a["final"][metric].get<double>();
        const double vb = b["final"][metric].get<double>();
        out["delta"][metric] = vb - va;
        out["winner"][metric] = vb < va ? "b" : (va < vb ? "a" : "tie");  // lower is better
    }
    return out;
}

// embeddings.csv -> retrieval metrics (all rows, self-excluded queries).
inline RetrievalReport evaluate_embeddings_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open embeddings: " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("embeddings.csv: empty file");
    std::vector<Vec> rows;
    std::vector<int> labels;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ls, tok, ',')) toks.push_back(tok);
        if (toks.size() < 4) throw std::runtime_error("embeddings.csv: malformed row");
        labels.push_back(std::stoi(toks[1]));
        Vec e;
        for (std::size_t i = 3; i < toks.size(); ++i) e.push_back(std::stod(toks[i]));
        rows.push_back(std::move(e));
    }
    if (rows.empty()) throw std::runtime_error("embeddings.csv: no rows");
    Matrix emb(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) emb.set_row(i, rows[i]);
    return evaluate(emb, labels);
}

}  // namespace ccp
