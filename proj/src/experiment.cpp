#include "drift/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace drift {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

constexpr const char* kEpochsHeader =
    "epoch,mean_reward,mean_kl,clip_fraction,grad_norm,mean_intrinsic_reward,"
    "intrinsic_clip_fraction,selection_mode";
constexpr const char* kParetoHeader =
    "checkpoint_epoch,mean_reward,dreamsim_style_diversity,clip_style_diversity,recall,vendi";

}  // namespace

Encoder EncoderConfig::build(int input_dim) const {
    if (kind == "identity") return Encoder::identity();
    if (kind == "random_projection") return Encoder::random_projection(input_dim, dim, seed);
    if (kind == "external_table") {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open embedding table: " + path);
        std::vector<Vec> table;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            Vec row;
            double v;
            while (ss >> v) row.push_back(v);
            if (!row.empty()) table.push_back(std::move(row));
        }
        return Encoder::external_table(std::move(table));
    }
    throw std::invalid_argument("unknown encoder kind: " + kind);
}

void ExperimentConfig::validate() const {
    spec.validate();
    grpo.validate();
    drift.validate();
    landscape.validate(spec.state_dim);
    if (prompts.empty()) throw std::invalid_argument("config needs prompts");
    for (size_t i = 0; i < prompts.size(); ++i) {
        if (prompts[i].prompt_id != static_cast<int>(i))
            throw std::invalid_argument("prompt ids must be 0..N-1 in order");
        if (prompts[i].e.size() != static_cast<size_t>(spec.prompt_dim))
            throw std::invalid_argument("prompt embedding dim mismatch");
    }
    if (static_cast<size_t>(landscape.active_modes_per_prompt.size()) != prompts.size())
        throw std::invalid_argument("landscape needs one active-mode mask per prompt");
    if (epochs < 0 || eval_every < 1) throw std::invalid_argument("bad epoch/eval cadence");
    if (eval.num_eval_prompts < 1 ||
        eval.num_eval_prompts > static_cast<int>(prompts.size()))
        throw std::invalid_argument("num_eval_prompts out of range");
    if (eval.samples_per_prompt < 2) throw std::invalid_argument("samples_per_prompt too small");
    if (eval.recall_k < 1) throw std::invalid_argument("recall_k must be >= 1");
    if (eval.num_eval_prompts * eval.samples_per_prompt <= eval.recall_k)
        throw std::invalid_argument("eval sample count must exceed recall_k");
    if (!(policy_noise_scale > 0.0)) throw std::invalid_argument("policy noise scale must be > 0");
    if (pretrain_steps < 0) throw std::invalid_argument("pretrain_steps must be >= 0");
    if (toggles.selection && drift.selection_mode == SelectionMode::off)
        throw std::invalid_argument("selection toggle requires a selection mode");
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.spec = DenoisingMDPSpec{};
    cfg.landscape.mode_centers = {{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0},
                                  {2.0, -2.0}, {3.0, 0.0}, {-3.0, 0.0}};
    cfg.landscape.mode_width = 2.5;
    cfg.landscape.active_modes_per_prompt = {{0, 1, 2, 3}, {0, 2}, {1, 3, 4}, {2, 4, 5}};
    for (int i = 0; i < 4; ++i) {
        PromptEmbedding p;
        p.prompt_id = i;
        p.e.assign(4, 0.0);
        p.e[i] = 1.0;
        cfg.prompts.push_back(std::move(p));
    }
    return cfg;
}

ExperimentConfig four_peak_config() {
    ExperimentConfig cfg = default_config();
    cfg.landscape.mode_centers = {{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}};
    cfg.landscape.mode_width = 2.5;
    cfg.landscape.active_modes_per_prompt = {{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3},
                                             {0, 1, 2, 3}};
    return cfg;
}

namespace {

nlohmann::json toggles_to_json(const MechanismToggles& t) {
    return {{"selection", t.selection},
            {"prompt_noise", t.prompt_noise},
            {"shaping", t.shaping},
            {"kl", t.kl}};
}

MechanismToggles toggles_from_json(const nlohmann::json& j) {
    MechanismToggles t;
    t.selection = j.at("selection").get<bool>();
    t.prompt_noise = j.at("prompt_noise").get<bool>();
    t.shaping = j.at("shaping").get<bool>();
    t.kl = j.at("kl").get<bool>();
    return t;
}

nlohmann::json encoder_to_json(const EncoderConfig& e) {
    return {{"kind", e.kind}, {"dim", e.dim}, {"seed", e.seed}, {"path", e.path}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
    EncoderConfig e;
    e.kind = j.at("kind").get<std::string>();
    e.dim = j.at("dim").get<int>();
    e.seed = j.at("seed").get<uint64_t>();
    e.path = j.value("path", std::string{});
    return e;
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["run_seed"] = run_seed;
    j["epochs"] = epochs;
    j["eval_every"] = eval_every;
    j["policy"] = {{"horizon", spec.horizon},
                   {"state_dim", spec.state_dim},
                   {"discount_gamma", spec.discount_gamma},
                   {"prompt_dim", spec.prompt_dim},
                   {"noise_scale", policy_noise_scale}};
    j["landscape"] = {{"mode_centers", landscape.mode_centers},
                      {"mode_width", landscape.mode_width},
                      {"active_modes_per_prompt", landscape.active_modes_per_prompt}};
    j["prompts"] = nlohmann::json::array();
    for (const auto& p : prompts)
        j["prompts"].push_back({{"prompt_id", p.prompt_id}, {"embedding", p.e}});
    j["grpo"] = {{"group_size", grpo.group_size},
                 {"clip_epsilon", grpo.clip_epsilon},
                 {"kl_beta", grpo.kl_beta},
                 {"learning_rate", grpo.learning_rate},
                 {"adam_beta1", grpo.adam_beta1},
                 {"adam_beta2", grpo.adam_beta2},
                 {"adam_eps", grpo.adam_eps},
                 {"weight_decay", grpo.weight_decay},
                 {"max_grad_norm", grpo.max_grad_norm},
                 {"samples_per_epoch", grpo.samples_per_epoch},
                 {"gradient_updates_per_epoch", grpo.gradient_updates_per_epoch},
                 {"std_floor", grpo.std_floor}};
    j["drift"] = {{"shaping_lambda", drift.shaping_lambda},
                  {"intrinsic_clip_sigma", drift.intrinsic_clip_sigma},
                  {"noise_scale", drift.noise_scale},
                  {"anneal_tau1", drift.anneal_tau1},
                  {"anneal_tau2", drift.anneal_tau2},
                  {"rescale_psi", drift.rescale_psi},
                  {"selection_mode", to_string(drift.selection_mode)},
                  {"pool_multiplier", drift.pool_multiplier},
                  {"invert_time", drift.invert_time}};
    j["toggles"] = toggles_to_json(toggles);
    j["pretrain"] = {{"steps", pretrain_steps}, {"learning_rate", pretrain_lr}};
    j["eval"] = {{"num_eval_prompts", eval.num_eval_prompts},
                 {"samples_per_prompt", eval.samples_per_prompt},
                 {"recall_k", eval.recall_k},
                 {"vendi_bandwidth", eval.vendi_bandwidth},
                 {"encoder", encoder_to_json(eval.encoder)},
                 {"clip_encoder", encoder_to_json(eval.clip_encoder)}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.run_seed = j.at("run_seed").get<uint64_t>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.eval_every = j.at("eval_every").get<int>();
    const auto& pol = j.at("policy");
    cfg.spec.horizon = pol.at("horizon").get<int>();
    cfg.spec.state_dim = pol.at("state_dim").get<int>();
    cfg.spec.discount_gamma = pol.at("discount_gamma").get<double>();
    cfg.spec.prompt_dim = pol.at("prompt_dim").get<int>();
    cfg.policy_noise_scale = pol.at("noise_scale").get<double>();
    const auto& land = j.at("landscape");
    cfg.landscape.mode_centers = land.at("mode_centers").get<std::vector<Vec>>();
    cfg.landscape.mode_width = land.at("mode_width").get<double>();
    cfg.landscape.active_modes_per_prompt =
        land.at("active_modes_per_prompt").get<std::vector<std::vector<int>>>();
    cfg.prompts.clear();
    for (const auto& pj : j.at("prompts")) {
        PromptEmbedding p;
        p.prompt_id = pj.at("prompt_id").get<int>();
        p.e = pj.at("embedding").get<Vec>();
        cfg.prompts.push_back(std::move(p));
    }
    const auto& g = j.at("grpo");
    cfg.grpo.group_size = g.at("group_size").get<int>();
    cfg.grpo.clip_epsilon = g.at("clip_epsilon").get<double>();
    cfg.grpo.kl_beta = g.at("kl_beta").get<double>();
    cfg.grpo.learning_rate = g.at("learning_rate").get<double>();
    cfg.grpo.adam_beta1 = g.at("adam_beta1").get<double>();
    cfg.grpo.adam_beta2 = g.at("adam_beta2").get<double>();
    cfg.grpo.adam_eps = g.at("adam_eps").get<double>();
    cfg.grpo.weight_decay = g.at("weight_decay").get<double>();
    cfg.grpo.max_grad_norm = g.at("max_grad_norm").get<double>();
    cfg.grpo.samples_per_epoch = g.at("samples_per_epoch").get<int>();
    cfg.grpo.gradient_updates_per_epoch = g.at("gradient_updates_per_epoch").get<int>();
    cfg.grpo.std_floor = g.at("std_floor").get<double>();
    const auto& d = j.at("drift");
    cfg.drift.shaping_lambda = d.at("shaping_lambda").get<double>();
    cfg.drift.intrinsic_clip_sigma = d.at("intrinsic_clip_sigma").get<double>();
    cfg.drift.noise_scale = d.at("noise_scale").get<double>();
    cfg.drift.anneal_tau1 = d.at("anneal_tau1").get<double>();
    cfg.drift.anneal_tau2 = d.at("anneal_tau2").get<double>();
    cfg.drift.rescale_psi = d.at("rescale_psi").get<double>();
    cfg.drift.selection_mode = selection_mode_from_string(d.at("selection_mode").get<std::string>());
    cfg.drift.pool_multiplier = d.at("pool_multiplier").get<int>();
    cfg.drift.invert_time = d.at("invert_time").get<bool>();
    cfg.toggles = toggles_from_json(j.at("toggles"));
    cfg.pretrain_steps = j.at("pretrain").at("steps").get<int>();
    cfg.pretrain_lr = j.at("pretrain").at("learning_rate").get<double>();
    const auto& ev = j.at("eval");
    cfg.eval.num_eval_prompts = ev.at("num_eval_prompts").get<int>();
    cfg.eval.samples_per_prompt = ev.at("samples_per_prompt").get<int>();
    cfg.eval.recall_k = ev.at("recall_k").get<int>();
    cfg.eval.vendi_bandwidth = ev.at("vendi_bandwidth").get<double>();
    cfg.eval.encoder = encoder_from_json(ev.at("encoder"));
    cfg.eval.clip_encoder = encoder_from_json(ev.at("clip_encoder"));
    return cfg;
}

namespace {

struct EvalSamples {
    std::vector<std::vector<Vec>> buckets;  // per eval prompt
    std::vector<Vec> pooled;
};

// Eval rollouts use clean prompts and a fixed substream independent of the
// epoch, so checkpoints of one run share identical eval seeds.
EvalSamples collect_eval_samples(const GaussianChainPolicy& policy,
                                 const ExperimentConfig& config) {
    EvalSamples samples;
    samples.buckets.resize(config.eval.num_eval_prompts);
    for (int pi = 0; pi < config.eval.num_eval_prompts; ++pi) {
        const PromptEmbedding& prompt = config.prompts[pi];
        for (int s = 0; s < config.eval.samples_per_prompt; ++s) {
            const uint64_t key =
                stream_key({config.run_seed, kStreamEval, static_cast<uint64_t>(prompt.prompt_id),
                            static_cast<uint64_t>(s)});
            Trajectory traj = sample_trajectory(policy, prompt, key);
            samples.buckets[pi].push_back(traj.states.back());
            samples.pooled.push_back(samples.buckets[pi].back());
        }
    }
    return samples;
}

ParetoRecord make_record(int epoch, const GaussianChainPolicy& policy,
                         const ExperimentConfig& config, const Encoder& enc1,
                         const Encoder& enc2, const std::vector<Vec>& reference_pool,
                         double bandwidth) {
    const EvalSamples samples = collect_eval_samples(policy, config);
    ParetoRecord rec;
    rec.checkpoint_epoch = epoch;
    double reward_sum = 0.0;
    int count = 0;
    for (int pi = 0; pi < config.eval.num_eval_prompts; ++pi)
        for (const Vec& x0 : samples.buckets[pi]) {
            reward_sum += evaluate_reward(config.landscape, x0, config.prompts[pi]);
            ++count;
        }
    rec.mean_reward = reward_sum / count;
    rec.dreamsim_style_diversity = set_diversity(samples.buckets, enc1);
    rec.clip_style_diversity = clip_style_diversity(samples.buckets, enc2);
    rec.recall = generalized_recall(reference_pool, samples.pooled, config.eval.recall_k);
    rec.vendi = vendi_score(samples.pooled, enc1, bandwidth);
    return rec;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
    config.validate();

    const GaussianChainPolicy init =
        GaussianChainPolicy::zero_init(config.spec, config.policy_noise_scale);
    const PretrainResult pre = pretrain(init, config.landscape, config.prompts,
                                        config.pretrain_steps, config.run_seed,
                                        config.pretrain_lr);

    RunResult result;
    result.pretrained = pre.policy;
    result.final_policy = pre.policy;

    const Encoder enc1 = config.eval.encoder.build(config.spec.state_dim);
    const Encoder enc2 = config.eval.clip_encoder.build(config.spec.state_dim);

    const EvalSamples baseline = collect_eval_samples(pre.policy, config);
    result.vendi_bandwidth_used = config.eval.vendi_bandwidth > 0.0
                                      ? config.eval.vendi_bandwidth
                                      : median_pairwise_distance(baseline.pooled, enc1);
    const std::vector<Vec> reference_pool = baseline.pooled;

    result.pareto.push_back(make_record(0, pre.policy, config, enc1, enc2, reference_pool,
                                        result.vendi_bandwidth_used));

    GaussianChainPolicy policy = pre.policy;
    const GaussianChainPolicy& ref_policy = result.pretrained;
    const Encoder intrinsic_encoder = config.eval.encoder.build(config.spec.state_dim);
    AdamState adam;
    std::vector<uint64_t> counters(config.prompts.size(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const GaussianChainPolicy last_good = policy;
        try {
            EpochStats stats = train_epoch(policy, ref_policy, config.prompts, config.landscape,
                                           config.grpo, config.drift, config.toggles,
                                           intrinsic_encoder, config.run_seed, epoch, adam,
                                           counters);
            result.epochs.push_back(stats);
        } catch (const TrainingAbort&) {
            policy = last_good;
            result.status = RunResult::Status::aborted;
            break;
        }
        if (epoch % config.eval_every == 0 || epoch == config.epochs)
            result.pareto.push_back(make_record(epoch, policy, config, enc1, enc2, reference_pool,
                                                result.vendi_bandwidth_used));
    }
    result.final_policy = policy;

    if (!out_dir.empty()) write_run_artifacts(result, config, out_dir);
    return result;
}

void write_run_artifacts(const RunResult& result, const ExperimentConfig& config,
                         const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream out(out_dir + "/epochs.csv");
        out << kEpochsHeader << "\n";
        for (const EpochStats& s : result.epochs) {
            out << s.epoch << ',' << fmt_double(s.mean_reward) << ',' << fmt_double(s.mean_kl)
                << ',' << fmt_double(s.clip_fraction) << ',' << fmt_double(s.grad_norm) << ','
                << fmt_double(s.mean_intrinsic_reward) << ','
                << fmt_double(s.intrinsic_clip_fraction) << ',' << s.selection_mode << "\n";
        }
    }
    {
        std::ofstream out(out_dir + "/pareto.csv");
        out << kParetoHeader << "\n";
        for (const ParetoRecord& r : result.pareto) {
            out << r.checkpoint_epoch << ',' << fmt_double(r.mean_reward) << ','
                << fmt_double(r.dreamsim_style_diversity) << ','
                << fmt_double(r.clip_style_diversity) << ',' << fmt_double(r.recall) << ','
                << fmt_double(r.vendi) << "\n";
        }
    }
    {
        std::ofstream out(out_dir + "/final_policy.json");
        out << result.final_policy.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(out_dir + "/config_echo.json");
        out << config.to_json().dump(2) << "\n";
    }
}

std::vector<ParetoRecord> load_pareto_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kParetoHeader)
        throw std::runtime_error("unexpected pareto.csv header in " + path);
    std::vector<ParetoRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 6) throw std::runtime_error("malformed pareto.csv row");
        ParetoRecord r;
        r.checkpoint_epoch = std::stoi(fields[0]);
        r.mean_reward = std::stod(fields[1]);
        r.dreamsim_style_diversity = std::stod(fields[2]);
        r.clip_style_diversity = std::stod(fields[3]);
        r.recall = std::stod(fields[4]);
        r.vendi = std::stod(fields[5]);
        records.push_back(r);
    }
    return records;
}

std::vector<EpochStats> load_epochs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kEpochsHeader)
        throw std::runtime_error("unexpected epochs.csv header in " + path);
    std::vector<EpochStats> stats;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 8) throw std::runtime_error("malformed epochs.csv row");
        EpochStats s;
        s.epoch = std::stoi(fields[0]);
        s.mean_reward = std::stod(fields[1]);
        s.mean_kl = std::stod(fields[2]);
        s.clip_fraction = std::stod(fields[3]);
        s.grad_norm = std::stod(fields[4]);
        s.mean_intrinsic_reward = std::stod(fields[5]);
        s.intrinsic_clip_fraction = std::stod(fields[6]);
        s.selection_mode = fields[7];
        stats.push_back(std::move(s));
    }
    return stats;
}

bool matched_reward_pair(const std::vector<ParetoRecord>& baseline,
                         const std::vector<ParetoRecord>& candidate, double tolerance,
                         ParetoRecord& baseline_out, ParetoRecord& candidate_out) {
    if (baseline.empty() || candidate.empty()) return false;
    const ParetoRecord* anchor = &baseline.front();
    for (const auto& r : baseline)
        if (r.mean_reward > anchor->mean_reward) anchor = &r;

    const ParetoRecord* best = nullptr;
    for (const auto& c : candidate) {
        if (c.mean_reward < anchor->mean_reward - tolerance) continue;
        if (!best || c.mean_reward < best->mean_reward) best = &c;
    }
    if (!best) return false;
    baseline_out = *anchor;
    candidate_out = *best;
    return true;
}

GainReport compare_runs(const std::vector<ParetoRecord>& baseline,
                        const std::vector<ParetoRecord>& candidate) {
    if (baseline.empty() || candidate.empty())
        throw std::invalid_argument("compare_runs needs non-empty pareto records");

    GainReport report;

    ParetoRecord b, c;
    if (matched_reward_pair(baseline, candidate, 0.0, b, c)) {
        report.dg_status = "ok";
        report.matched_reward_baseline = b.mean_reward;
        report.matched_reward_candidate = c.mean_reward;
        auto gain = [](double cand, double base) {
            return base != 0.0 ? 100.0 * (cand - base) / base
                               : std::numeric_limits<double>::quiet_NaN();
        };
        report.dg_dreamsim = gain(c.dreamsim_style_diversity, b.dreamsim_style_diversity);
        report.dg_clip = gain(c.clip_style_diversity, b.clip_style_diversity);
        report.dg_recall = gain(c.recall, b.recall);
        report.dg_vendi = gain(c.vendi, b.vendi);
    }

    // RG: anchor on the baseline's end-state primary diversity; the candidate
    // record must meet or exceed it, closest from above.
    const ParetoRecord* anchor = &baseline.front();
    for (const auto& r : baseline)
        if (r.mean_reward > anchor->mean_reward) anchor = &r;
    const ParetoRecord* best = nullptr;
    for (const auto& cr : candidate) {
        if (cr.dreamsim_style_diversity < anchor->dreamsim_style_diversity) continue;
        if (!best || cr.dreamsim_style_diversity < best->dreamsim_style_diversity) best = &cr;
    }
    if (best && anchor->mean_reward != 0.0) {
        report.rg_status = "ok";
        report.rg = 100.0 * (best->mean_reward - anchor->mean_reward) / anchor->mean_reward;
    }
    return report;
}

nlohmann::json GainReport::to_json() const {
    return {{"dg_status", dg_status},
            {"rg_status", rg_status},
            {"dg_dreamsim_percent", dg_dreamsim},
            {"dg_clip_percent", dg_clip},
            {"dg_recall_percent", dg_recall},
            {"dg_vendi_percent", dg_vendi},
            {"rg_percent", rg},
            {"matched_reward_baseline", matched_reward_baseline},
            {"matched_reward_candidate", matched_reward_candidate}};
}

}  // namespace drift
