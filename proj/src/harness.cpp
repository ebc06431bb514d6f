#include "vomps/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "vomps/oracle.hpp"

namespace vomps {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE || !std::isfinite(v))
        throw ConfigError(key, "config field '" + key + "': expected a finite number, got '" + value + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const std::string v = trim(value);
    if (v.empty() || v[0] == '-' || v[0] == '+')
        throw ConfigError(key, "config field '" + key + "': expected a non-negative integer, got '" + value + "'");
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError(key, "config field '" + key + "': expected a non-negative integer, got '" + value + "'");
    return static_cast<std::uint64_t>(n);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key, "config field '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& value) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
    if (out.empty()) throw ConfigError(key, "config field '" + key + "': at least one seed is required");
    return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(seeds[i]);
    }
    return s;
}

bool is_tabular_env(const std::string& env) { return env == "two-circle" || env == "symmetric-two-circle"; }

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, "config field '" + key + "': " + what);
}

double population_std(const Vec& xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

double mean_of(const Vec& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

}  // namespace

RunConfig RunConfig::defaults_for(const std::string& env) {
    RunConfig cfg;
    cfg.env = env;
    if (env == "cartpole") {
        cfg.gamma = 0.99;
        cfg.k = 0.03;
        cfg.eval_horizon = 200;
        cfg.total_steps = 400000;
    }
    return cfg;
}

AgentHyper RunConfig::agent_hyper() const {
    AgentHyper h;
    h.gamma_hat = gamma_hat;
    h.lambda1 = lambda1;
    h.lambda2 = lambda2;
    h.alpha_v = alpha_v;
    h.alpha_psi = alpha_psi;
    h.baseline_eta = baseline_eta;
    h.rho_max = rho_max;
    h.storm = StormHyper{k, w, beta};
    h.checkpoint_interval = checkpoint_interval;
    return h;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    return {
        {"env", env},
        {"algorithm", algorithm},
        {"gamma", format_double(gamma)},
        {"gamma_hat", format_double(gamma_hat)},
        {"lambda1", format_double(lambda1)},
        {"lambda2", format_double(lambda2)},
        {"alpha_v", format_double(alpha_v)},
        {"alpha_psi", format_double(alpha_psi)},
        {"k", format_double(k)},
        {"w", format_double(w)},
        {"beta", format_double(beta)},
        {"baseline_eta", format_double(baseline_eta)},
        {"rho_max", format_double(rho_max)},
        {"sigma", format_double(sigma)},
        {"reward_scale", format_double(reward_scale)},
        {"seeds", join_seeds(seeds)},
        {"total_steps", std::to_string(total_steps)},
        {"eval_interval", std::to_string(eval_interval)},
        {"eval_rollouts", std::to_string(eval_rollouts)},
        {"eval_horizon", std::to_string(eval_horizon)},
        {"eval_greedy", eval_greedy ? "true" : "false"},
        {"action_noise_frac", format_double(action_noise_frac)},
        {"smooth_window", std::to_string(smooth_window)},
        {"checkpoint_interval", std::to_string(checkpoint_interval)},
        {"workers", std::to_string(workers)},
        {"output", output},
        {"save_policy", save_policy ? "true" : "false"},
    };
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>>
        setters = {
            {"env", [](RunConfig& c, auto&, const std::string& v) { c.env = v; }},
            {"algorithm", [](RunConfig& c, auto&, const std::string& v) { c.algorithm = v; }},
            {"gamma", [](RunConfig& c, auto& k, auto& v) { c.gamma = parse_double(k, v); }},
            {"gamma_hat", [](RunConfig& c, auto& k, auto& v) { c.gamma_hat = parse_double(k, v); }},
            {"lambda1", [](RunConfig& c, auto& k, auto& v) { c.lambda1 = parse_double(k, v); }},
            {"lambda2", [](RunConfig& c, auto& k, auto& v) { c.lambda2 = parse_double(k, v); }},
            {"alpha_v", [](RunConfig& c, auto& k, auto& v) { c.alpha_v = parse_double(k, v); }},
            {"alpha_psi", [](RunConfig& c, auto& k, auto& v) { c.alpha_psi = parse_double(k, v); }},
            {"k", [](RunConfig& c, auto& k, auto& v) { c.k = parse_double(k, v); }},
            {"w", [](RunConfig& c, auto& k, auto& v) { c.w = parse_double(k, v); }},
            {"beta", [](RunConfig& c, auto& k, auto& v) { c.beta = parse_double(k, v); }},
            {"baseline_eta", [](RunConfig& c, auto& k, auto& v) { c.baseline_eta = parse_double(k, v); }},
            {"rho_max", [](RunConfig& c, auto& k, auto& v) { c.rho_max = parse_double(k, v); }},
            {"sigma", [](RunConfig& c, auto& k, auto& v) { c.sigma = parse_double(k, v); }},
            {"reward_scale", [](RunConfig& c, auto& k, auto& v) { c.reward_scale = parse_double(k, v); }},
            {"seeds", [](RunConfig& c, auto& k, auto& v) { c.seeds = parse_seed_list(k, v); }},
            {"total_steps", [](RunConfig& c, auto& k, auto& v) { c.total_steps = parse_u64(k, v); }},
            {"eval_interval", [](RunConfig& c, auto& k, auto& v) { c.eval_interval = parse_u64(k, v); }},
            {"eval_rollouts", [](RunConfig& c, auto& k, auto& v) { c.eval_rollouts = parse_u64(k, v); }},
            {"eval_horizon", [](RunConfig& c, auto& k, auto& v) { c.eval_horizon = parse_u64(k, v); }},
            {"eval_greedy", [](RunConfig& c, auto& k, auto& v) { c.eval_greedy = parse_bool(k, v); }},
            {"action_noise_frac", [](RunConfig& c, auto& k, auto& v) { c.action_noise_frac = parse_double(k, v); }},
            {"smooth_window", [](RunConfig& c, auto& k, auto& v) { c.smooth_window = parse_u64(k, v); }},
            {"checkpoint_interval",
             [](RunConfig& c, auto& k, auto& v) { c.checkpoint_interval = parse_u64(k, v); }},
            {"workers", [](RunConfig& c, auto& k, auto& v) { c.workers = parse_u64(k, v); }},
            {"output", [](RunConfig& c, auto&, const std::string& v) { c.output = v; }},
            {"save_policy", [](RunConfig& c, auto& k, auto& v) { c.save_policy = parse_bool(k, v); }},
        };
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown config field '" + key + "'");
    it->second(cfg, key, value);
}

void validate_config(const RunConfig& cfg) {
    require(is_tabular_env(cfg.env) || cfg.env == "cartpole", "env", "unknown environment '" + cfg.env + "'");
    try {
        parse_algorithm(cfg.algorithm);
    } catch (const std::invalid_argument&) {
        throw ConfigError("algorithm", "config field 'algorithm': unknown algorithm '" + cfg.algorithm + "'");
    }
    if (is_tabular_env(cfg.env)) {
        const double env_gamma = TabularEnv(cfg.env == "two-circle" ? two_circle(cfg.reward_scale)
                                                                    : symmetric_two_circle())
                                     .gamma();
        require(cfg.gamma == env_gamma, "gamma", "must equal the tabular environment's discount " +
                                                     format_double(env_gamma));
        require(cfg.action_noise_frac == 0.0, "action_noise_frac", "action noise applies to cartpole only");
    }
    require(cfg.gamma >= 0.0 && cfg.gamma < 1.0, "gamma", "must lie in [0,1)");
    require(cfg.gamma_hat >= 0.0 && cfg.gamma_hat < 1.0, "gamma_hat", "must lie in [0,1)");
    require(cfg.lambda1 >= 0.0 && cfg.lambda1 <= 1.0, "lambda1", "must lie in [0,1]");
    require(cfg.lambda2 >= 0.0 && cfg.lambda2 <= 1.0, "lambda2", "must lie in [0,1]");
    require(cfg.alpha_v > 0.0 && cfg.alpha_v <= 1.0, "alpha_v", "must lie in (0,1]");
    require(cfg.alpha_psi > 0.0 && cfg.alpha_psi <= 1.0, "alpha_psi", "must lie in (0,1]");
    require(cfg.k > 0.0, "k", "must be positive");
    require(cfg.w > 0.0, "w", "must be positive");
    require(cfg.beta >= 0.0, "beta", "must be non-negative");
    require(cfg.baseline_eta > 0.0, "baseline_eta", "must be positive");
    require(cfg.rho_max > 0.0, "rho_max", "must be positive");
    require(cfg.sigma > 0.0, "sigma", "must be positive");
    require(cfg.reward_scale > 0.0, "reward_scale", "must be positive");
    require(!cfg.seeds.empty(), "seeds", "at least one seed is required");
    require(cfg.total_steps >= 1, "total_steps", "must be at least 1");
    require(cfg.eval_interval >= 1, "eval_interval", "must be at least 1");
    require(cfg.eval_rollouts >= 1, "eval_rollouts", "must be at least 1");
    require(cfg.eval_horizon >= 1, "eval_horizon", "must be at least 1");
    require(cfg.action_noise_frac >= 0.0 && cfg.action_noise_frac < 1.0, "action_noise_frac", "must lie in [0,1)");
    require(cfg.smooth_window >= 1, "smooth_window", "must be at least 1");
    require(cfg.workers >= 1, "workers", "must be at least 1");
    require(!cfg.output.empty(), "output", "must not be empty");
}

RunConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("", "config line " + std::to_string(lineno) + ": empty key");
        for (const auto& [k, v] : kv)
            if (k == key) throw ConfigError(key, "config field '" + key + "' given more than once");
        kv.emplace_back(key, value);
    }

    std::string env = "two-circle";
    for (const auto& [k, v] : kv)
        if (k == "env") env = v;
    RunConfig cfg = RunConfig::defaults_for(env);
    for (const auto& [k, v] : kv) apply_config_value(cfg, k, v);
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

Environment make_run_environment(const RunConfig& cfg) {
    if (cfg.env == "two-circle") return TabularEnv(two_circle(cfg.reward_scale));
    if (cfg.env == "symmetric-two-circle") return TabularEnv(symmetric_two_circle());
    if (cfg.env == "cartpole") return CartPoleEnv(cfg.action_noise_frac, cfg.gamma);
    throw ConfigError("env", "config field 'env': unknown environment '" + cfg.env + "'");
}

ReturnStats evaluate_mc_return(const Environment& env, const Policy& policy, std::size_t n_rollouts,
                               std::size_t horizon, double gamma, Rng& rng, bool greedy) {
    if (n_rollouts == 0) throw std::invalid_argument("evaluate_mc_return: n_rollouts must be at least 1");
    Vec mc(n_rollouts);
    Vec episodic(n_rollouts);
    Environment local = env;
    std::visit(
        [&](auto& e) {
            for (std::size_t i = 0; i < n_rollouts; ++i) {
                State s = e.reset(rng);
                double discount = 1.0;
                double g = 0.0;
                double total = 0.0;
                for (std::size_t t = 0; t < horizon; ++t) {
                    const Action a = greedy ? greedy_action(policy, s) : sample_action(policy, s, rng);
                    WrappedTransition w = e.step(a, rng);
                    g += discount * w.transition.r;
                    total += w.transition.r;
                    discount *= gamma;
                    if (w.transition.terminal) break;
                    s = std::move(w.transition.s_next);
                }
                mc[i] = g;
                episodic[i] = total;
            }
        },
        local);
    ReturnStats out;
    out.mc_mean = mean_of(mc);
    out.mc_std = population_std(mc, out.mc_mean);
    out.episodic_mean = mean_of(episodic);
    out.episodic_std = population_std(episodic, out.episodic_mean);
    return out;
}

Vec smooth(std::span<const double> series, std::size_t window) {
    if (window == 0) throw std::invalid_argument("smooth: window must be at least 1");
    Vec out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
        double acc = 0.0;
        for (std::size_t j = first; j <= i; ++j) acc += series[j];
        out[i] = acc / static_cast<double>(i + 1 - first);
    }
    return out;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<std::vector<MetricRow>>& per_seed, std::size_t window) {
    if (per_seed.empty()) return {};
    const std::size_t n = per_seed.front().size();
    for (const auto& rows : per_seed)
        if (rows.size() != n) throw std::invalid_argument("aggregate_rows: seeds have different row counts");

    std::vector<AggregateRow> out(n);
    Vec mc(per_seed.size()), ep(per_seed.size()), pi(per_seed.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < per_seed.size(); ++s) {
            if (per_seed[s][i].step != per_seed.front()[i].step)
                throw std::invalid_argument("aggregate_rows: seeds have different evaluation steps");
            mc[s] = per_seed[s][i].mc_return;
            ep[s] = per_seed[s][i].episodic_return;
            pi[s] = per_seed[s][i].pi_ab;
        }
        AggregateRow& r = out[i];
        r.step = per_seed.front()[i].step;
        r.mc_mean = mean_of(mc);
        r.mc_std = population_std(mc, r.mc_mean);
        r.episodic_mean = mean_of(ep);
        r.episodic_std = population_std(ep, r.episodic_mean);
        r.pi_ab_mean = mean_of(pi);
        r.pi_ab_std = population_std(pi, r.pi_ab_mean);
    }
    Vec col(n);
    auto smooth_column = [&](double AggregateRow::*src, double AggregateRow::*dst) {
        for (std::size_t i = 0; i < n; ++i) col[i] = out[i].*src;
        const Vec sm = smooth(col, window);
        for (std::size_t i = 0; i < n; ++i) out[i].*dst = sm[i];
    };
    smooth_column(&AggregateRow::mc_mean, &AggregateRow::mc_smooth);
    smooth_column(&AggregateRow::episodic_mean, &AggregateRow::episodic_smooth);
    smooth_column(&AggregateRow::pi_ab_mean, &AggregateRow::pi_ab_smooth);
    return out;
}

std::vector<MetricRow> run_seed(const RunConfig& cfg, std::uint64_t seed, std::optional<Policy>* final_policy) {
    validate_config(cfg);
    Rng init_rng(seed, 0);
    Rng train_rng(seed, 1);
    Rng eval_rng(seed, 2);

    Environment env = make_run_environment(cfg);
    const Environment eval_env = env;
    std::visit([&](auto& e) { e.reset(train_rng); }, env);
    const BehaviorPolicy mu = make_behavior(env);
    Agent agent = make_agent(parse_algorithm(cfg.algorithm), env, cfg.agent_hyper(), cfg.sigma, init_rng);

    std::vector<MetricRow> rows;
    TrainHooks hooks;
    hooks.eval_interval = cfg.eval_interval;
    hooks.on_eval = [&](std::size_t step, const Agent& a, const StepInfo& last) {
        const ReturnStats stats =
            evaluate_mc_return(eval_env, a.policy(), cfg.eval_rollouts, cfg.eval_horizon, cfg.gamma, eval_rng,
                               cfg.eval_greedy);
        MetricRow row;
        row.step = step;
        row.seed = seed;
        row.mc_return = stats.mc_mean;
        row.episodic_return = stats.episodic_mean;
        row.pi_ab = std::numeric_limits<double>::quiet_NaN();
        if (const auto* tab = std::get_if<TabularSoftmaxPolicy>(&a.policy()); tab && tab->n_actions(0) >= 2)
            row.pi_ab = tab->probabilities(0)[0];
        row.g_norm = last.direction_norm;
        row.eta = last.eta;
        rows.push_back(row);
    };
    train(agent, env, mu, cfg.total_steps, train_rng, hooks);
    if (final_policy) *final_policy = agent.policy();
    return rows;
}

void write_config_header(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : cfg.entries()) out << "# " << k << "=" << v << "\n";
}

void write_seed_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
    out << "step,seed,mc_return,episodic_return,pi_ab,g_norm,eta\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%llu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                      static_cast<unsigned long long>(r.seed), r.mc_return, r.episodic_return, r.pi_ab, r.g_norm,
                      r.eta);
        out << buf;
    }
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
    out << "step,mc_return_mean,mc_return_std,mc_return_smooth,episodic_return_mean,episodic_return_std,"
           "episodic_return_smooth,pi_ab_mean,pi_ab_std,pi_ab_smooth\n";
    char buf[768];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                      r.mc_mean, r.mc_std, r.mc_smooth, r.episodic_mean, r.episodic_std, r.episodic_smooth,
                      r.pi_ab_mean, r.pi_ab_std, r.pi_ab_smooth);
        out << buf;
    }
}

ExperimentResult run_experiment(const RunConfig& cfg, bool write_files) {
    validate_config(cfg);
    const std::size_t n = cfg.seeds.size();
    ExperimentResult result;
    result.per_seed.resize(n);
    std::vector<std::optional<Policy>> policies(n);
    std::vector<std::exception_ptr> errors(n);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                result.per_seed[i] = run_seed(cfg, cfg.seeds[i], &policies[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(cfg.workers, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    result.aggregate = aggregate_rows(result.per_seed, cfg.smooth_window);
    if (!write_files) return result;

    const std::filesystem::path dir(cfg.output);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());

    auto open = [&](const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        result.files.push_back(path);
        return out;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto path = dir / ("seed_" + std::to_string(cfg.seeds[i]) + ".csv");
        std::ofstream out = open(path);
        write_config_header(out, cfg);
        write_seed_csv(out, result.per_seed[i]);
        if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
        if (cfg.save_policy) {
            const auto ck = dir / ("policy_seed_" + std::to_string(cfg.seeds[i]) + ".ckpt");
            write_named_arrays(ck, policy_snapshot(*policies[i]));
            result.files.push_back(ck);
        }
    }
    const auto agg_path = dir / "aggregate.csv";
    std::ofstream agg = open(agg_path);
    write_config_header(agg, cfg);
    write_aggregate_csv(agg, result.aggregate);
    if (!agg) throw std::runtime_error("write failed for '" + agg_path.string() + "'");
    return result;
}

void write_oracle_csv(std::ostream& out, const std::string& env_name, double gamma_hat, double reward_scale) {
    TabularMdp mdp = env_name == "two-circle"             ? two_circle(reward_scale)
                     : env_name == "symmetric-two-circle" ? symmetric_two_circle()
                                                          : throw std::invalid_argument(
                                                                "oracle: '" + env_name + "' is not a tabular environment");
    const PolicyMatrix mu = PolicyMatrix::uniform(mdp);
    const Vec d_mu = stationary(transition_under(mdp, mu));

    out << "quantity,policy,state,value\n";
    char buf[256];
    auto row = [&](const char* quantity, const std::string& policy, const std::string& state, double v) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g\n", quantity, policy.c_str(), state.c_str(), v);
        out << buf;
    };
    row("gamma_hat", "", "", gamma_hat);
    for (std::size_t s = 0; s < d_mu.size(); ++s) row("d_mu", "mu", std::to_string(s), d_mu[s]);

    // Enumerate deterministic policies in mixed-radix order over the per-state action counts.
    std::vector<std::size_t> choice(mdp.n_states(), 0);
    while (true) {
        std::string label;
        if (env_name == "two-circle") {
            label = choice[two_circle_ids::A] == two_circle_ids::kToB ? "A->B" : "A->C";
        } else {
            for (std::size_t s = 0; s < choice.size(); ++s) label += (s ? "-" : "") + std::to_string(choice[s]);
        }
        const PolicyMatrix pi = PolicyMatrix::deterministic(mdp, choice);
        const DenseMatrix p_pi = transition_under(mdp, pi);
        const Vec d_pi = stationary(p_pi);
        const Vec d_hat = d_hat_gamma(p_pi, d_mu, gamma_hat);
        const Vec v = value_function(mdp, pi);
        const Vec c = exact_density_ratio(mdp, pi, mu, gamma_hat);
        for (std::size_t s = 0; s < d_pi.size(); ++s) row("d_pi", label, std::to_string(s), d_pi[s]);
        for (std::size_t s = 0; s < d_hat.size(); ++s) row("d_hat", label, std::to_string(s), d_hat[s]);
        for (std::size_t s = 0; s < v.size(); ++s) row("V", label, std::to_string(s), v[s]);
        for (std::size_t s = 0; s < c.size(); ++s) row("C", label, std::to_string(s), c[s]);
        row("J_mu", label, "", objective(mdp, pi, mu, 0.0));
        row("J_hat", label, "", objective(mdp, pi, mu, gamma_hat));

        std::size_t s = 0;
        while (s < choice.size() && ++choice[s] == mdp.n_actions(s)) choice[s++] = 0;
        if (s == choice.size()) break;
    }
}

BumpsProblem::Instance BumpsProblem::sample(Rng& rng) const {
    Instance inst;
    inst.centers.resize(bumps);
    inst.heights.resize(bumps);
    for (std::size_t j = 0; j < bumps; ++j) {
        inst.centers[j].resize(dim);
        for (double& c : inst.centers[j]) c = rng.uniform(-3.0, 3.0);
        inst.heights[j] = rng.uniform(0.5, 1.5);
    }
    return inst;
}

double BumpsProblem::value(const Instance& inst, std::span<const double> x) const {
    double f = 0.5 * ridge * dot(x, x);
    for (std::size_t j = 0; j < bumps; ++j) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (x[i] - inst.centers[j][i]) * (x[i] - inst.centers[j][i]);
        f -= inst.heights[j] * std::exp(-d2 / (2.0 * width * width));
    }
    return f;
}

Vec BumpsProblem::grad(const Instance& inst, std::span<const double> x) const {
    Vec g(x.begin(), x.end());
    for (double& gi : g) gi *= ridge;
    const double inv_w2 = 1.0 / (width * width);
    for (std::size_t j = 0; j < bumps; ++j) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d2 += (x[i] - inst.centers[j][i]) * (x[i] - inst.centers[j][i]);
        const double coef = inst.heights[j] * std::exp(-0.5 * d2 * inv_w2) * inv_w2;
        for (std::size_t i = 0; i < dim; ++i) g[i] += coef * (x[i] - inst.centers[j][i]);
    }
    return g;
}

namespace {

struct BenchTrace {
    Vec running;  // running mean of ‖∇f‖² at each report point
};

// Shared per-seed randomness: the instance, the start point and the noise stream.
struct BenchSeed {
    BumpsProblem::Instance inst;
    Vec x0;
    std::uint64_t seed;
};

BenchSeed make_bench_seed(const BumpsProblem& p, std::uint64_t seed) {
    Rng rng(seed, 10);
    BenchSeed b{p.sample(rng), Vec(p.dim), seed};
    for (double& x : b.x0) x = rng.uniform(-3.0, 3.0);
    return b;
}

template <class Update>
BenchTrace run_bench_method(const BenchConfig& cfg, const BenchSeed& bs, Update&& update) {
    const BumpsProblem& p = cfg.problem;
    Rng noise(bs.seed, 11);
    Vec x = bs.x0;
    Vec xi(p.dim);
    BenchTrace out;
    double acc = 0.0;
    std::size_t next_report = 0;
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        const Vec true_grad = p.grad(bs.inst, x);
        acc += dot(true_grad, true_grad);
        if (next_report < cfg.report_at.size() && t == cfg.report_at[next_report]) {
            out.running.push_back(acc / static_cast<double>(t));
            ++next_report;
        }
        for (double& v : xi) v = noise.normal();
        const double z = p.mult_noise * noise.normal();
        auto sampled = [&](std::span<const double> at, const Vec& exact) {
            Vec g = exact;
            for (std::size_t i = 0; i < p.dim; ++i) g[i] += p.noise * xi[i] + z * at[i];
            return g;
        };
        update(x, true_grad, sampled);
        if (!all_finite(x)) throw NumericError("bench-storm: iterate diverged");
    }
    return out;
}

Vec average_running(const std::vector<BenchTrace>& traces) {
    Vec out(traces.front().running.size(), 0.0);
    for (const auto& t : traces)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.running[i] / static_cast<double>(traces.size());
    return out;
}

}  // namespace

BenchResult run_storm_bench(const BenchConfig& cfg) {
    if (cfg.seeds.empty() || cfg.steps == 0) throw std::invalid_argument("bench-storm: need seeds and steps");
    for (std::size_t i = 0; i < cfg.report_at.size(); ++i)
        if (cfg.report_at[i] == 0 || cfg.report_at[i] > cfg.steps || (i && cfg.report_at[i] <= cfg.report_at[i - 1]))
            throw std::invalid_argument("bench-storm: report points must be increasing and within the step budget");

    const BumpsProblem& p = cfg.problem;
    std::vector<BenchSeed> seeds;
    for (auto s : cfg.seeds) seeds.push_back(make_bench_seed(p, s));

    std::vector<BenchTrace> storm_traces;
    for (const auto& bs : seeds) {
        StormState st(cfg.storm);
        Vec x_prev = bs.x0;
        Vec grad_prev_exact = p.grad(bs.inst, bs.x0);
        storm_traces.push_back(run_bench_method(cfg, bs, [&](Vec& x, const Vec& true_grad, auto&& sampled) {
            const Vec now = sampled(x, true_grad);
            const Vec prev = sampled(x_prev, grad_prev_exact);
            const StormStep step = storm_generic_step(st, now, prev);
            x_prev = x;
            grad_prev_exact = true_grad;
            axpy(-step.eta, st.g, x);
        }));
    }

    BenchResult result;
    result.report_at = cfg.report_at;
    result.storm_running = average_running(storm_traces);

    bool have_best = false;
    for (double eta : cfg.sgd_etas) {
        std::vector<BenchTrace> traces;
        try {
            for (const auto& bs : seeds)
                traces.push_back(run_bench_method(cfg, bs, [&](Vec& x, const Vec& true_grad, auto&& sampled) {
                    axpy(-eta, sampled(x, true_grad), x);
                }));
        } catch (const NumericError&) {
            continue;
        }
        const Vec avg = average_running(traces);
        if (!have_best || avg.back() < result.sgd_running.back()) {
            result.sgd_running = avg;
            result.sgd_best_eta = eta;
            have_best = true;
        }
    }
    if (!have_best) throw NumericError("bench-storm: every SGD stepsize diverged");
    return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "# sgd_best_eta=%.17g\n", result.sgd_best_eta);
    out << buf << "step,storm_running_grad_sq,sgd_running_grad_sq\n";
    for (std::size_t i = 0; i < result.report_at.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", result.report_at[i], result.storm_running[i],
                      result.sgd_running[i]);
        out << buf;
    }
}

}  // namespace vomps
