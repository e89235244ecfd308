#include "tlens/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tlens/io.hpp"

namespace tlens {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& section, const std::string& key, const std::string& v) {
    double out;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw std::invalid_argument("config: [" + section + "] " + key + " is not a number: " + v);
    return out;
}

std::uint64_t to_u64(const std::string& section, const std::string& key, const std::string& v) {
    std::uint64_t out;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw std::invalid_argument("config: [" + section + "] " + key +
                                    " is not a non-negative integer: " + v);
    return out;
}

bool to_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw std::invalid_argument("config: [" + section + "] " + key + " is not a boolean: " + v);
}

template <class T, class F>
std::vector<T> to_list(const std::string& v, F&& conv) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(conv(item));
    }
    return out;
}

}  // namespace

std::map<std::string, std::map<std::string, std::string>> parse_kv_sections(
    const std::string& text) {
    std::map<std::string, std::map<std::string, std::string>> out;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            out[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " +
                                        std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config: key outside any section at line " +
                                        std::to_string(lineno));
        if (out[section].count(key))
            throw std::invalid_argument("config: duplicate key '" + key + "' in [" + section +
                                        "]");
        out[section][key] = val;
    }
    return out;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return parse(read_text_file(path));
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    const auto sections = parse_kv_sections(text);

    static const std::map<std::string, std::set<std::string>> kSchema = {
        {"experiment",
         {"name", "output_dir", "seeds", "steps", "epochs", "log_every", "checkpoint_steps"}},
        {"data",
         {"source", "n_train", "n_test", "class_a", "class_b", "label_noise", "down_h",
          "down_w", "images_path", "labels_path", "csv_path", "target_column", "log_columns",
          "poly_d", "pool_size", "irregular_frac", "mixture_props", "mixture_size"}},
        {"arch",
         {"hidden", "activation", "quad_eps", "output", "final_trainable", "init_scale",
          "width_sweep"}},
        {"optim",
         {"kind", "loss", "gamma", "gammas", "beta1", "beta2", "lambda", "eps",
          "warmup_steps", "decay_steps", "decay_factor", "batch_size"}},
        {"tracking",
         {"test_subset", "track_train", "track_lin", "smoother", "smoother_budget",
          "residuals", "invariant_tol", "kernel_log_every", "head", "stop_at_interpolation",
          "stop_loss_improve", "stop_patience_epochs"}},
        {"gbt", {"stages", "depth", "gamma"}},
        {"lmc",
         {"spawn_steps", "alpha_grid", "drift_horizon", "eval_subset", "child_seed_a",
          "child_seed_b", "init_checkpoint"}},
    };

    for (const auto& [section, kv] : sections) {
        const auto it = kSchema.find(section);
        if (it == kSchema.end())
            throw std::invalid_argument("config: unknown section [" + section + "]");
        for (const auto& [key, value] : kv) {
            (void)value;
            if (!it->second.count(key))
                throw std::invalid_argument("config: unknown key '" + key + "' in [" + section +
                                            "]");
        }
    }

    ExperimentConfig c;
    auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
        const auto s = sections.find(sec);
        if (s == sections.end()) return nullptr;
        const auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };

#define STR_FIELD(sec, key, field) \
    if (const auto* v = get(sec, key)) c.field = *v;
#define NUM_FIELD(sec, key, field) \
    if (const auto* v = get(sec, key)) c.field = to_double(sec, key, *v);
#define U64_FIELD(sec, key, field) \
    if (const auto* v = get(sec, key)) c.field = to_u64(sec, key, *v);
#define BOOL_FIELD(sec, key, field) \
    if (const auto* v = get(sec, key)) c.field = to_bool(sec, key, *v);

    STR_FIELD("experiment", "name", name)
    STR_FIELD("experiment", "output_dir", output_dir)
    if (const auto* v = get("experiment", "seeds"))
        c.seeds = to_list<std::uint64_t>(*v, [&](const std::string& s) {
            return to_u64("experiment", "seeds", s);
        });
    U64_FIELD("experiment", "steps", steps)
    U64_FIELD("experiment", "epochs", epochs)
    U64_FIELD("experiment", "log_every", log_every)
    if (const auto* v = get("experiment", "checkpoint_steps"))
        c.checkpoint_steps = to_list<std::size_t>(*v, [&](const std::string& s) {
            return to_u64("experiment", "checkpoint_steps", s);
        });

    STR_FIELD("data", "source", data_source)
    U64_FIELD("data", "n_train", n_train)
    U64_FIELD("data", "n_test", n_test)
    if (const auto* v = get("data", "class_a"))
        c.class_a = static_cast<unsigned>(to_u64("data", "class_a", *v));
    if (const auto* v = get("data", "class_b"))
        c.class_b = static_cast<unsigned>(to_u64("data", "class_b", *v));
    NUM_FIELD("data", "label_noise", label_noise)
    U64_FIELD("data", "down_h", down_h)
    U64_FIELD("data", "down_w", down_w)
    STR_FIELD("data", "images_path", images_path)
    STR_FIELD("data", "labels_path", labels_path)
    STR_FIELD("data", "csv_path", csv_path)
    STR_FIELD("data", "target_column", target_column)
    if (const auto* v = get("data", "log_columns"))
        c.log_columns = to_list<std::string>(*v, [](const std::string& s) { return s; });
    U64_FIELD("data", "poly_d", poly_d)
    U64_FIELD("data", "pool_size", pool_size)
    NUM_FIELD("data", "irregular_frac", irregular_frac)
    if (const auto* v = get("data", "mixture_props"))
        c.mixture_props = to_list<double>(*v, [&](const std::string& s) {
            return to_double("data", "mixture_props", s);
        });
    U64_FIELD("data", "mixture_size", mixture_size)

    if (const auto* v = get("arch", "hidden"))
        c.hidden = to_list<std::size_t>(*v, [&](const std::string& s) {
            return to_u64("arch", "hidden", s);
        });
    STR_FIELD("arch", "activation", activation)
    NUM_FIELD("arch", "quad_eps", quad_eps)
    STR_FIELD("arch", "output", output)
    BOOL_FIELD("arch", "final_trainable", final_trainable)
    NUM_FIELD("arch", "init_scale", init_scale)
    if (const auto* v = get("arch", "width_sweep"))
        c.width_sweep = to_list<std::size_t>(*v, [&](const std::string& s) {
            return to_u64("arch", "width_sweep", s);
        });

    STR_FIELD("optim", "kind", optimizer)
    STR_FIELD("optim", "loss", loss)
    NUM_FIELD("optim", "gamma", gamma)
    if (const auto* v = get("optim", "gammas"))
        c.gammas = to_list<double>(*v, [&](const std::string& s) {
            return to_double("optim", "gammas", s);
        });
    NUM_FIELD("optim", "beta1", beta1)
    NUM_FIELD("optim", "beta2", beta2)
    NUM_FIELD("optim", "lambda", lambda)
    NUM_FIELD("optim", "eps", eps)
    U64_FIELD("optim", "warmup_steps", warmup_steps)
    if (const auto* v = get("optim", "decay_steps"))
        c.decay_steps = to_list<std::size_t>(*v, [&](const std::string& s) {
            return to_u64("optim", "decay_steps", s);
        });
    NUM_FIELD("optim", "decay_factor", decay_factor)
    U64_FIELD("optim", "batch_size", batch_size)

    U64_FIELD("tracking", "test_subset", test_subset)
    BOOL_FIELD("tracking", "track_train", track_train)
    BOOL_FIELD("tracking", "track_lin", track_lin)
    BOOL_FIELD("tracking", "smoother", smoother)
    U64_FIELD("tracking", "smoother_budget", smoother_budget)
    STR_FIELD("tracking", "residuals", residuals)
    NUM_FIELD("tracking", "invariant_tol", invariant_tol)
    U64_FIELD("tracking", "kernel_log_every", kernel_log_every)
    STR_FIELD("tracking", "head", head)
    BOOL_FIELD("tracking", "stop_at_interpolation", stop_at_interpolation)
    NUM_FIELD("tracking", "stop_loss_improve", stop_loss_improve)
    U64_FIELD("tracking", "stop_patience_epochs", stop_patience_epochs)

    U64_FIELD("gbt", "stages", gbt_stages)
    U64_FIELD("gbt", "depth", gbt_depth)
    NUM_FIELD("gbt", "gamma", gbt_gamma)

    if (const auto* v = get("lmc", "spawn_steps"))
        c.spawn_steps = to_list<std::size_t>(*v, [&](const std::string& s) {
            return to_u64("lmc", "spawn_steps", s);
        });
    U64_FIELD("lmc", "alpha_grid", alpha_grid)
    U64_FIELD("lmc", "drift_horizon", drift_horizon)
    U64_FIELD("lmc", "eval_subset", eval_subset)
    U64_FIELD("lmc", "child_seed_a", child_seed_a)
    U64_FIELD("lmc", "child_seed_b", child_seed_b)
    STR_FIELD("lmc", "init_checkpoint", init_checkpoint)

#undef STR_FIELD
#undef NUM_FIELD
#undef U64_FIELD
#undef BOOL_FIELD

    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    static const std::set<std::string> kNames = {"approx-error", "double-descent", "grokking",
                                                 "gbt-compare", "lmc"};
    if (!kNames.count(name))
        throw std::invalid_argument("config: unknown experiment '" + name + "'");
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
    if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
    if (steps == 0 && epochs == 0 && name != "gbt-compare")
        throw std::invalid_argument("config: steps or epochs must be set");

    static const std::set<std::string> kSources = {"synth-images", "synth-mnist1d",
                                                   "polynomial", "synth-tabular", "idx", "csv"};
    if (!kSources.count(data_source))
        throw std::invalid_argument("config: unknown data source '" + data_source + "'");
    if (n_train == 0) throw std::invalid_argument("config: n_train must be positive");

    static const std::set<std::string> kOpt = {"sgd", "momentum", "weight_decay", "adamw"};
    if (!kOpt.count(optimizer))
        throw std::invalid_argument("config: unknown optimizer '" + optimizer + "'");
    if (loss != "squared" && loss != "bce")
        throw std::invalid_argument("config: unknown loss '" + loss + "'");
    if (residuals != "network" && residuals != "telescoped")
        throw std::invalid_argument("config: residuals must be network or telescoped");
    if (head != "auto" && head != "pre" && head != "post")
        throw std::invalid_argument("config: head must be auto, pre or post");
    if (activation != "relu" && activation != "quad")
        throw std::invalid_argument("config: unknown activation '" + activation + "'");
    if (output != "identity" && output != "sigmoid")
        throw std::invalid_argument("config: unknown output '" + output + "'");
    if (smoother && loss != "squared")
        throw std::invalid_argument("config: the smoother requires the squared loss");

    if (name == "double-descent" && width_sweep.empty())
        throw std::invalid_argument("config: double-descent needs arch.width_sweep");
    if (name == "lmc" && spawn_steps.empty())
        throw std::invalid_argument("config: lmc needs lmc.spawn_steps");
    if (name == "gbt-compare" && mixture_props.empty())
        throw std::invalid_argument("config: gbt-compare needs data.mixture_props");
}

std::string ExperimentConfig::fingerprint() const {
    nlohmann::json j;
    j["name"] = name;
    j["seeds"] = seeds;
    j["steps"] = steps;
    j["epochs"] = epochs;
    j["data"] = {data_source, n_train, n_test, class_a, class_b, label_noise, poly_d,
                 pool_size};
    j["arch"] = {hidden, activation, quad_eps, output, final_trainable, init_scale};
    j["optim"] = {optimizer, loss, gamma, beta1, beta2, lambda, eps, warmup_steps,
                  decay_factor, batch_size};
    return j.dump();
}

}  // namespace tlens
