#include "onebit_fl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "onebit_fl/error.hpp"

namespace onebit {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
                      std::string(expected));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(parse_u64(key, v)); }

double parse_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
    std::vector<std::size_t> out;
    std::string item;
    std::istringstream in{std::string(v)};
    while (std::getline(in, item, ',')) out.push_back(parse_size(key, trim(item)));
    if (out.empty()) bad_value(key, v, "a comma-separated list of widths");
    return out;
}

std::string join(const std::vector<std::size_t>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

std::string one_of(std::string_view key, std::string_view v, std::initializer_list<std::string_view> allowed) {
    for (auto a : allowed) {
        if (v == a) return std::string(v);
    }
    std::string list;
    for (auto a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
    bad_value(key, v, list);
}

struct Field {
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, Field, std::less<>>& fields() {
    using C = ExperimentConfig;
    static const std::map<std::string, Field, std::less<>> table = {
        {"algorithm",
         {[](C& c, std::string_view v) {
              const auto s = one_of("algorithm", v, {"pfed1bs", "fedavg", "local"});
              c.federation.algorithm = s == "pfed1bs" ? Algorithm::pfed1bs
                                       : s == "fedavg" ? Algorithm::fedavg
                                                       : Algorithm::local;
          },
          [](const C& c) { return to_string(c.federation.algorithm); }}},
        {"model", {[](C& c, std::string_view v) { c.model = one_of("model", v, {"linear", "logistic", "mlp"}); },
                   [](const C& c) { return c.model; }}},
        {"dataset", {[](C& c, std::string_view v) { c.dataset = one_of("dataset", v, {"synthetic", "idx", "csv"}); },
                     [](const C& c) { return c.dataset; }}},
        {"K", {[](C& c, std::string_view v) { c.clients = parse_size("K", v); },
               [](const C& c) { return std::to_string(c.clients); }}},
        {"S", {[](C& c, std::string_view v) { c.federation.hp.participants = parse_size("S", v); },
               [](const C& c) { return std::to_string(c.federation.hp.participants); }}},
        {"T", {[](C& c, std::string_view v) { c.federation.hp.rounds = parse_size("T", v); },
               [](const C& c) { return std::to_string(c.federation.hp.rounds); }}},
        {"R", {[](C& c, std::string_view v) { c.federation.hp.local_steps = parse_size("R", v); },
               [](const C& c) { return std::to_string(c.federation.hp.local_steps); }}},
        {"eta", {[](C& c, std::string_view v) { c.federation.hp.eta = parse_double("eta", v); },
                 [](const C& c) { return format_double(c.federation.hp.eta); }}},
        {"lambda", {[](C& c, std::string_view v) { c.federation.hp.lambda = parse_double("lambda", v); },
                    [](const C& c) { return format_double(c.federation.hp.lambda); }}},
        {"mu", {[](C& c, std::string_view v) { c.federation.hp.mu = parse_double("mu", v); },
                [](const C& c) { return format_double(c.federation.hp.mu); }}},
        {"gamma", {[](C& c, std::string_view v) { c.federation.hp.gamma = parse_double("gamma", v); },
                   [](const C& c) { return format_double(c.federation.hp.gamma); }}},
        {"m_ratio", {[](C& c, std::string_view v) { c.federation.m_ratio = parse_double("m_ratio", v); },
                     [](const C& c) { return format_double(c.federation.m_ratio); }}},
        {"batch_size", {[](C& c, std::string_view v) { c.federation.hp.batch_size = parse_size("batch_size", v); },
                        [](const C& c) { return std::to_string(c.federation.hp.batch_size); }}},
        {"seed", {[](C& c, std::string_view v) { c.federation.seed = parse_u64("seed", v); },
                  [](const C& c) { return std::to_string(c.federation.seed); }}},
        {"output_dir", {[](C& c, std::string_view v) { c.output_dir = std::string(v); },
                        [](const C& c) { return c.output_dir; }}},
        {"train_all_clients",
         {[](C& c, std::string_view v) { c.federation.train_all_clients = parse_bool("train_all_clients", v); },
          [](const C& c) { return std::string(c.federation.train_all_clients ? "true" : "false"); }}},
        {"strict_onebit_downlink",
         {[](C& c, std::string_view v) {
              c.federation.strict_onebit_downlink = parse_bool("strict_onebit_downlink", v);
          },
          [](const C& c) { return std::string(c.federation.strict_onebit_downlink ? "true" : "false"); }}},
        {"broadcast_once",
         {[](C& c, std::string_view v) { c.federation.broadcast_once = parse_bool("broadcast_once", v); },
          [](const C& c) { return std::string(c.federation.broadcast_once ? "true" : "false"); }}},
        {"potential",
         {[](C& c, std::string_view v) {
              c.federation.potential =
                  one_of("potential", v, {"exact", "sampled"}) == "exact" ? PotentialMode::exact : PotentialMode::sampled;
          },
          [](const C& c) { return to_string(c.federation.potential); }}},
        {"error_policy",
         {[](C& c, std::string_view v) {
              c.federation.error_policy = one_of("error_policy", v, {"skip-client", "abort-run"}) == "skip-client"
                                              ? ErrorPolicy::skip_client
                                              : ErrorPolicy::abort_run;
          },
          [](const C& c) { return to_string(c.federation.error_policy); }}},
        {"eval_subset", {[](C& c, std::string_view v) { c.federation.eval_subset = parse_size("eval_subset", v); },
                         [](const C& c) { return std::to_string(c.federation.eval_subset); }}},
        {"dim", {[](C& c, std::string_view v) { c.dim = parse_size("dim", v); },
                 [](const C& c) { return std::to_string(c.dim); }}},
        {"classes", {[](C& c, std::string_view v) { c.classes = parse_size("classes", v); },
                     [](const C& c) { return std::to_string(c.classes); }}},
        {"hidden", {[](C& c, std::string_view v) { c.hidden = parse_list("hidden", v); },
                    [](const C& c) { return join(c.hidden); }}},
        {"activation",
         {[](C& c, std::string_view v) { c.activation = one_of("activation", v, {"relu", "tanh"}); },
          [](const C& c) { return c.activation; }}},
        {"samples_per_client",
         {[](C& c, std::string_view v) { c.samples_per_client = parse_size("samples_per_client", v); },
          [](const C& c) { return std::to_string(c.samples_per_client); }}},
        {"heterogeneity", {[](C& c, std::string_view v) { c.heterogeneity = parse_double("heterogeneity", v); },
                           [](const C& c) { return format_double(c.heterogeneity); }}},
        {"noise", {[](C& c, std::string_view v) { c.noise = parse_double("noise", v); },
                   [](const C& c) { return format_double(c.noise); }}},
        {"shards_per_client",
         {[](C& c, std::string_view v) { c.shards_per_client = parse_size("shards_per_client", v); },
          [](const C& c) { return std::to_string(c.shards_per_client); }}},
        {"test_fraction", {[](C& c, std::string_view v) { c.test_fraction = parse_double("test_fraction", v); },
                           [](const C& c) { return format_double(c.test_fraction); }}},
        {"train_path", {[](C& c, std::string_view v) { c.train_path = std::string(v); },
                        [](const C& c) { return c.train_path; }}},
        {"label_path", {[](C& c, std::string_view v) { c.label_path = std::string(v); },
                        [](const C& c) { return c.label_path; }}},
    };
    return table;
}

ModelSpec model_from(const ExperimentConfig& c) {
    if (c.model == "linear") return ModelSpec::linear(c.dim);
    if (c.model == "logistic") return ModelSpec::logistic(c.dim, c.classes);
    std::vector<std::size_t> dims{c.dim};
    dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
    dims.push_back(c.classes);
    return ModelSpec::mlp(std::move(dims), c.activation == "tanh" ? Activation::tanh : Activation::relu);
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, field] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
    const auto it = fields().find(key);
    if (it == fields().end()) {
        std::string valid;
        for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
        throw ConfigError("unknown config key '" + std::string(key) + "'; valid keys: " + valid);
    }
    it->second.set(config, value);
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        set_config_value(config, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    }
    validate_config(config);
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::vector<std::string> validate_config(ExperimentConfig& config) {
    auto& fed = config.federation;
    if (!(fed.m_ratio > 0.0 && fed.m_ratio <= 1.0)) {
        throw ConfigError("m_ratio must lie in (0, 1], got " + format_double(fed.m_ratio));
    }
    if (config.clients == 0) throw ConfigError("K must be positive");
    if (fed.hp.participants > config.clients) {
        throw ConfigError("S=" + std::to_string(fed.hp.participants) + " exceeds K=" + std::to_string(config.clients));
    }
    if (config.dim == 0) throw ConfigError("dim must be positive");
    if (config.model != "linear" && config.classes < 2) throw ConfigError("classes must be at least 2");
    if (config.dataset == "synthetic") {
        if (config.model != "linear" && config.classes != 2) {
            throw ConfigError("synthetic classification data is binary; set classes = 2");
        }
        if (config.samples_per_client < 2) throw ConfigError("samples_per_client must be at least 2");
    } else {
        if (config.train_path.empty()) throw ConfigError("dataset '" + config.dataset + "' needs train_path");
        if (config.dataset == "idx" && config.label_path.empty()) throw ConfigError("dataset 'idx' needs label_path");
        if (config.model == "linear") throw ConfigError("file datasets are labelled; use a classifier model");
        if (config.shards_per_client == 0) throw ConfigError("shards_per_client must be positive");
    }
    if (!(config.heterogeneity >= 0.0)) throw ConfigError("heterogeneity must be non-negative");
    if (!(config.noise >= 0.0)) throw ConfigError("noise must be non-negative");
    if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0)) {
        throw ConfigError("test_fraction must lie in [0, 1)");
    }
    if (fed.eval_subset == 0) throw ConfigError("eval_subset must be positive");
    fed.model = model_from(config);
    fed.model.validate();
    return fed.hp.validate();
}

std::string canonical_echo(const ExperimentConfig& config) {
    std::string out;
    for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
    return out;
}

FederatedDataset build_dataset(const ExperimentConfig& config) {
    const auto& fed_cfg = config.federation;
    FederatedDataset fed;
    if (config.dataset == "synthetic") {
        SyntheticSpec spec;
        spec.kind = config.model == "linear" ? SyntheticKind::linear : SyntheticKind::logistic;
        spec.clients = config.clients;
        spec.samples_per_client = config.samples_per_client;
        spec.dim = config.dim;
        spec.heterogeneity = config.heterogeneity;
        spec.noise = config.noise;
        spec.seed = fed_cfg.seed;
        fed = federate(generate_synthetic(spec).clients, config.test_fraction, fed_cfg.seed,
                       config.model == "linear" ? 0 : 2);
    } else {
        const auto format = config.dataset == "idx" ? FileFormat::idx : FileFormat::csv;
        Dataset pooled = load_dataset(config.train_path, format, config.label_path);
        if (format == FileFormat::csv) scale_features_unit(pooled);
        fed = federate_by_label(std::move(pooled), config.clients, config.shards_per_client, config.test_fraction,
                                fed_cfg.seed, config.classes);
    }
    if (fed.data.dim != fed_cfg.model.input_dim()) {
        throw ConfigError("data has " + std::to_string(fed.data.dim) + " features but the model expects dim = " +
                          std::to_string(fed_cfg.model.input_dim()));
    }
    for (double y : fed.data.targets) {
        if (fed_cfg.model.is_classifier() &&
            (y < 0.0 || y >= static_cast<double>(fed_cfg.model.output_dim()) || y != std::floor(y))) {
            throw ConfigError("label " + format_double(y) + " out of range for classes = " +
                              std::to_string(fed_cfg.model.output_dim()));
        }
    }
    for (std::size_t k = 0; k < fed.clients.size(); ++k) {
        if (fed.clients[k].train.size() < fed_cfg.hp.batch_size) {
            throw ConfigError("client " + std::to_string(k) + " has " + std::to_string(fed.clients[k].train.size()) +
                              " train samples, fewer than batch_size = " + std::to_string(fed_cfg.hp.batch_size));
        }
    }
    return fed;
}

}  // namespace onebit
