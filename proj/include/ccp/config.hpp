#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/ccp.hpp"
#include "ccp/losses.hpp"

namespace ccp {

// Flat key-value experiment config with dotted section keys. Lines are
// `key = value`; '#' starts a comment.
struct ExperimentConfig {
    // data
    std::string data_kind = "synth";  // synth | idx
    std::string idx_images;
    std::string idx_labels;
    int synth_classes = 10;
    std::size_t synth_per_class = 64;
    std::size_t synth_dim = 16;
    double synth_spread = 0.5;
    double val_fraction = 1.0 / 3.0;

    std::vector<std::size_t> net_dims = {16, 64, 32, 2};

    std::string loss_kind = "generalized_contrastive";
    double loss_alpha = 0.0;
    double loss_beta = 0.5;
    double loss_margin = 0.5;
    double loss_m_plus = 0.0;
    double loss_m_minus = 0.3841;
    double loss_ms_alpha = 2.0;
    double loss_ms_beta = 40.0;
    double loss_ms_lambda = 0.5;

    double lr = 1e-3;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;

    std::size_t batch_size = 32;
    std::size_t samples_per_class = 4;

    double lambda = 2e-4;
    std::size_t proxies_per_class = 1;
    std::size_t pool_budget = 1;
    std::size_t eval_every = 25;
    std::size_t inner_patience = 3;
    std::size_t global_patience = 60;
    std::size_t max_projections = 100;
    std::size_t max_steps_per_projection = 0;
    std::size_t total_step_budget = 0;
    double violation_beta = 0.5;
    double markov_alpha = 1.0;

    std::string mode = "ccp";  // baseline_proxy | ccp | sample_based
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

namespace detail {
inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
inline std::vector<std::size_t> parse_dims(const std::string& s) {
    std::vector<std::size_t> dims;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        dims.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    return dims;
}
}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));

        auto as_d = [&] { return std::stod(val); };
        auto as_u = [&] { return static_cast<std::size_t>(std::stoull(val)); };

        if (key == "data.kind") cfg.data_kind = val;
        else if (key == "data.images") cfg.idx_images = val;
        else if (key == "data.labels") cfg.idx_labels = val;
        else if (key == "data.classes") cfg.synth_classes = static_cast<int>(std::stol(val));
        else if (key == "data.per_class") cfg.synth_per_class = as_u();
        else if (key == "data.dim") cfg.synth_dim = as_u();
        else if (key == "data.spread") cfg.synth_spread = as_d();
        else if (key == "data.val_fraction") cfg.val_fraction = as_d();
        else if (key == "net.dims") cfg.net_dims = detail::parse_dims(val);
        else if (key == "loss.kind") cfg.loss_kind = val;
        else if (key == "loss.alpha") cfg.loss_alpha = as_d();
        else if (key == "loss.beta") cfg.loss_beta = as_d();
        else if (key == "loss.margin") cfg.loss_margin = as_d();
        else if (key == "loss.m_plus") cfg.loss_m_plus = as_d();
        else if (key == "loss.m_minus") cfg.loss_m_minus = as_d();
        else if (key == "loss.ms_alpha") cfg.loss_ms_alpha = as_d();
        else if (key == "loss.ms_beta") cfg.loss_ms_beta = as_d();
        else if (key == "loss.ms_lambda") cfg.loss_ms_lambda = as_d();
        else if (key == "opt.lr") cfg.lr = as_d();
        else if (key == "opt.weight_decay") cfg.weight_decay = as_d();
        else if (key == "opt.beta1") cfg.adam_beta1 = as_d();
        else if (key == "opt.beta2") cfg.adam_beta2 = as_d();
        else if (key == "opt.eps") cfg.adam_eps = as_d();
        else if (key == "sampler.batch_size") cfg.batch_size = as_u();
        else if (key == "sampler.samples_per_class") cfg.samples_per_class = as_u();
        else if (key == "ccp.lambda") cfg.lambda = as_d();
        else if (key == "ccp.proxies_per_class") cfg.proxies_per_class = as_u();
        else if (key == "ccp.pool_budget") cfg.pool_budget = as_u();
        else if (key == "ccp.eval_every") cfg.eval_every = as_u();
        else if (key == "ccp.inner_patience") cfg.inner_patience = as_u();
        else if (key == "ccp.global_patience") cfg.global_patience = as_u();
        else if (key == "ccp.max_projections") cfg.max_projections = as_u();
        else if (key == "ccp.max_steps_per_projection") cfg.max_steps_per_projection = as_u();
        else if (key == "ccp.total_step_budget") cfg.total_step_budget = as_u();
        else if (key == "ccp.violation_beta") cfg.violation_beta = as_d();
        else if (key == "ccp.markov_alpha") cfg.markov_alpha = as_d();
        else if (key == "mode") cfg.mode = val;
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "out_dir") cfg.out_dir = val;
        else
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

inline LossSpec make_loss_spec(const ExperimentConfig& cfg) {
    if (cfg.loss_kind == "generalized_contrastive")
        return LossSpec::generalized_contrastive(cfg.loss_alpha, cfg.loss_beta);
    if (cfg.loss_kind == "contrastive_c1") return LossSpec::contrastive_c1(cfg.loss_margin);
    if (cfg.loss_kind == "contrastive_c2")
        return LossSpec::contrastive_c2(cfg.loss_m_plus, cfg.loss_m_minus);
    if (cfg.loss_kind == "triplet") return LossSpec::triplet(cfg.loss_margin);
    if (cfg.loss_kind == "multi_similarity")
        return LossSpec::multi_similarity(cfg.loss_ms_alpha, cfg.loss_ms_beta, cfg.loss_ms_lambda);
    throw std::invalid_argument("unknown loss kind: " + cfg.loss_kind);
}

inline TrainMode parse_mode(const std::string& mode) {
    if (mode == "baseline_proxy") return TrainMode::BaselineProxy;
    if (mode == "ccp") return TrainMode::CCP;
    if (mode == "sample_based") return TrainMode::SampleBased;
    throw std::invalid_argument("unknown mode: " + mode);
}

inline void validate_config(const ExperimentConfig& cfg) {
    if (cfg.net_dims.size() < 2) throw std::invalid_argument("config: net.dims needs >= 2 entries");
    if (cfg.proxies_per_class < 1) throw std::invalid_argument("config: P must be >= 1");
    if (cfg.pool_budget < cfg.proxies_per_class)
        throw std::invalid_argument("config: b must be >= P");
    if (cfg.lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (cfg.lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 1.0)
        throw std::invalid_argument("config: val_fraction must be in (0, 1)");
    make_loss_spec(cfg);  // hyperparameter constraints
    parse_mode(cfg.mode);
    if (cfg.data_kind != "synth" && cfg.data_kind != "idx")
        throw std::invalid_argument("config: data.kind must be synth or idx");
    if (cfg.data_kind == "idx" && (cfg.idx_images.empty() || cfg.idx_labels.empty()))
        throw std::invalid_argument("config: idx data needs data.images and data.labels");
}

inline TrainConfig make_train_config(const ExperimentConfig& cfg) {
    validate_config(cfg);
    TrainConfig tc;
    tc.net_dims = cfg.net_dims;
    tc.lr = cfg.lr;
    tc.weight_decay = cfg.weight_decay;
    tc.adam_beta1 = cfg.adam_beta1;
    tc.adam_beta2 = cfg.adam_beta2;
    tc.adam_eps = cfg.adam_eps;
    tc.loss = make_loss_spec(cfg);
    tc.batch_size = cfg.batch_size;
    tc.samples_per_class = cfg.samples_per_class;
    tc.lambda = cfg.lambda;
    tc.proxies_per_class = cfg.proxies_per_class;
    tc.pool_budget = cfg.pool_budget;
    tc.eval_every = cfg.eval_every;
    tc.inner_patience = cfg.inner_patience;
    tc.global_patience = cfg.global_patience;
    tc.max_projections = cfg.max_projections;
    tc.max_steps_per_projection = cfg.max_steps_per_projection;
    tc.total_step_budget = cfg.total_step_budget;
    tc.mode = parse_mode(cfg.mode);
    tc.seed = cfg.seed;
    tc.violation_beta = cfg.violation_beta;
    tc.markov_alpha = cfg.markov_alpha;
    return tc;
}

// Dataset per the config, split applied.
inline Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    if (cfg.data_kind == "idx") {
        ds = load_idx(cfg.idx_images, cfg.idx_labels);
    } else {
        ds = synth_blobs(cfg.synth_classes, cfg.synth_per_class, cfg.synth_dim, cfg.synth_spread,
                         cfg.seed);
    }
    split(ds, cfg.val_fraction, cfg.seed);
    return ds;
}

inline std::string config_to_text(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "data.kind = " << c.data_kind << "\n";
    if (!c.idx_images.empty()) os << "data.images = " << c.idx_images << "\n";
    if (!c.idx_labels.empty()) os << "data.labels = " << c.idx_labels << "\n";
    os << "data.classes = " << c.synth_classes << "\n"
       << "data.per_class = " << c.synth_per_class << "\n"
       << "data.dim = " << c.synth_dim << "\n"
       << "data.spread = " << c.synth_spread << "\n"
       << "data.val_fraction = " << c.val_fraction << "\n"
       << "net.dims = ";
    for (std::size_t i = 0; i < c.net_dims.size(); ++i)
        os << (i ? "," : "") << c.net_dims[i];
    os << "\n"
       << "loss.kind = " << c.loss_kind << "\n"
       << "loss.alpha = " << c.loss_alpha << "\n"
       << "loss.beta = " << c.loss_beta << "\n"
       << "loss.margin = " << c.loss_margin << "\n"
       << "loss.m_plus = " << c.loss_m_plus << "\n"
       << "loss.m_minus = " << c.loss_m_minus << "\n"
       << "loss.ms_alpha = " << c.loss_ms_alpha << "\n"
       << "loss.ms_beta = " << c.loss_ms_beta << "\n"
       << "loss.ms_lambda = " << c.loss_ms_lambda << "\n"
       << "opt.lr = " << c.lr << "\n"
       << "opt.weight_decay = " << c.weight_decay << "\n"
       << "opt.beta1 = " << c.adam_beta1 << "\n"
       << "opt.beta2 = " << c.adam_beta2 << "\n"
       << "opt.eps = " << c.adam_eps << "\n"
       << "sampler.batch_size = " << c.batch_size << "\n"
       << "sampler.samples_per_class = " << c.samples_per_class << "\n"
       << "ccp.lambda = " << c.lambda << "\n"
       << "ccp.proxies_per_class = " << c.proxies_per_class << "\n"
       << "ccp.pool_budget = " << c.pool_budget << "\n"
       << "ccp.eval_every = " << c.eval_every << "\n"
       << "ccp.inner_patience = " << c.inner_patience << "\n"
       << "ccp.global_patience = " << c.global_patience << "\n"
       << "ccp.max_projections = " << c.max_projections << "\n"
       << "ccp.max_steps_per_projection = " << c.max_steps_per_projection << "\n"
       << "ccp.total_step_budget = " << c.total_step_budget << "\n"
       << "ccp.violation_beta = " << c.violation_beta << "\n"
       << "ccp.markov_alpha = " << c.markov_alpha << "\n"
       << "mode = " << c.mode << "\n"
       << "seed = " << c.seed << "\n"
       << "out_dir = " << c.out_dir << "\n";
    return os.str();
}

}  // namespace ccp
