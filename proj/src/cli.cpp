#include "fltrust/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fltrust/data.hpp"
#include "fltrust/verify.hpp"

namespace fltrust::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// --- enum <-> name tables ---------------------------------------------------

ModelKind parse_model(const std::string& v) {
    if (v == "lr") return ModelKind::LogisticRegression;
    if (v == "mlp") return ModelKind::Mlp;
    throw config_error("config key 'model': unknown value '" + v + "'");
}

const char* model_name(ModelKind k) { return k == ModelKind::Mlp ? "mlp" : "lr"; }

DataKind parse_data_kind(const std::string& v) {
    if (v == "synthetic") return DataKind::Synthetic;
    if (v == "csv") return DataKind::Csv;
    throw config_error("config key 'data.kind': unknown value '" + v + "'");
}

RootCase parse_root_case(const std::string& v) {
    if (v == "case1") return RootCase::CaseI;
    if (v == "case2") return RootCase::CaseII;
    throw config_error("config key 'root_case': unknown value '" + v + "'");
}

Rule parse_rule(const std::string& v) {
    if (v == "fedavg") return Rule::FedAvg;
    if (v == "krum") return Rule::Krum;
    if (v == "trim_mean") return Rule::TrimMean;
    if (v == "median") return Rule::Median;
    if (v == "fltrust") return Rule::FLTrust;
    throw config_error("config key 'rule': unknown value '" + v + "'");
}

const char* rule_name(Rule r) {
    switch (r) {
        case Rule::FedAvg: return "fedavg";
        case Rule::Krum: return "krum";
        case Rule::TrimMean: return "trim_mean";
        case Rule::Median: return "median";
        case Rule::FLTrust: return "fltrust";
    }
    return "fedavg";
}

FltrustVariant parse_variant(const std::string& v) {
    if (v == "standard") return FltrustVariant::Standard;
    if (v == "no_relu") return FltrustVariant::NoReLU;
    if (v == "no_norm") return FltrustVariant::NoNorm;
    if (v == "par_norm") return FltrustVariant::ParNorm;
    if (v == "with_server") return FltrustVariant::WithServer;
    if (v == "server_only") return FltrustVariant::ServerOnly;
    throw config_error("config key 'variant': unknown value '" + v + "'");
}

const char* variant_name(FltrustVariant v) {
    switch (v) {
        case FltrustVariant::Standard: return "standard";
        case FltrustVariant::NoReLU: return "no_relu";
        case FltrustVariant::NoNorm: return "no_norm";
        case FltrustVariant::ParNorm: return "par_norm";
        case FltrustVariant::WithServer: return "with_server";
        case FltrustVariant::ServerOnly: return "server_only";
    }
    return "standard";
}

AttackKind parse_attack(const std::string& v) {
    if (v == "none") return AttackKind::None;
    if (v == "label_flip") return AttackKind::LabelFlip;
    if (v == "krum") return AttackKind::KrumAttack;
    if (v == "trim") return AttackKind::TrimAttack;
    if (v == "scaling") return AttackKind::Scaling;
    if (v == "adaptive") return AttackKind::Adaptive;
    throw config_error("config key 'attack': unknown value '" + v + "'");
}

const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::LabelFlip: return "label_flip";
        case AttackKind::KrumAttack: return "krum";
        case AttackKind::TrimAttack: return "trim";
        case AttackKind::Scaling: return "scaling";
        case AttackKind::Adaptive: return "adaptive";
    }
    return "none";
}

// --- strict object reading ---------------------------------------------------

// Tracks which keys were consulted so leftovers can be rejected by name.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string scope) : obj_(obj), scope_(std::move(scope)) {
        if (!obj_.is_object()) {
            if (scope_.empty()) throw config_error("config: expected a JSON object");
            throw config_error("config key '" + scope_ + "': expected an object");
        }
    }

    // nullptr when absent or null (both mean "use the default").
    const json* find(const std::string& key) {
        seen_.push_back(key);
        const auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    int get_int(const std::string& key, int def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number_integer()) fail(key, "an integer");
        return v->get<int>();
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
        return v->get<std::uint64_t>();
    }

    double get_double(const std::string& key, double def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number()) fail(key, "a number");
        return v->get<double>();
    }

    std::string get_string(const std::string& key, const std::string& def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_string()) fail(key, "a string");
        return v->get<std::string>();
    }

    void finish() const {
        for (const auto& item : obj_.items())
            if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end())
                throw config_error("config: unknown key '" + qualify(item.key()) + "'");
    }

    std::string qualify(const std::string& key) const {
        return scope_.empty() ? key : scope_ + "." + key;
    }

private:
    [[noreturn]] void fail(const std::string& key, const char* want) const {
        throw config_error("config key '" + qualify(key) + "': expected " + want);
    }

    const json& obj_;
    std::string scope_;
    std::vector<std::string> seen_;
};

std::vector<int> int_array(const json& a, const std::string& key) {
    if (!a.is_array()) throw config_error("config key '" + key + "': expected an array");
    std::vector<int> out;
    for (const auto& v : a) {
        if (!v.is_number_integer())
            throw config_error("config key '" + key + "': expected integer elements");
        out.push_back(v.get<int>());
    }
    return out;
}

std::vector<double> double_array(const json& a, const std::string& key) {
    if (!a.is_array()) throw config_error("config key '" + key + "': expected an array");
    std::vector<double> out;
    for (const auto& v : a) {
        if (!v.is_number())
            throw config_error("config key '" + key + "': expected numeric elements");
        out.push_back(v.get<double>());
    }
    return out;
}

// --- config <-> json ----------------------------------------------------------

ExperimentConfig config_from_json(const json& root) {
    ObjectReader r(root, "");
    ExperimentConfig cfg;
    cfg.seed = r.get_u64("seed", cfg.seed);
    cfg.n = r.get_int("n", cfg.n);
    cfg.tau = r.get_int("tau", cfg.tau);
    cfg.rounds = r.get_int("R_g", cfg.rounds);
    cfg.local_iters = r.get_int("R_l", cfg.local_iters);
    cfg.batch_size = r.get_int("b", cfg.batch_size);
    cfg.lr = r.get_double("lr", cfg.lr);
    cfg.q = r.get_double("q", cfg.q);
    cfg.model = parse_model(r.get_string("model", "lr"));
    cfg.hidden_dim = r.get_int("hidden_dim", cfg.hidden_dim);

    if (const json* d = r.find("data")) {
        ObjectReader dr(*d, "data");
        cfg.data.kind = parse_data_kind(dr.get_string("kind", "synthetic"));
        if (cfg.data.kind == DataKind::Synthetic) {
            cfg.data.classes = dr.get_int("classes", cfg.data.classes);
            cfg.data.input_dim = dr.get_int("input_dim", cfg.data.input_dim);
            cfg.data.per_class = dr.get_int("per_class", cfg.data.per_class);
            cfg.data.test_per_class = dr.get_int("test_per_class", cfg.data.test_per_class);
            cfg.data.spread = dr.get_double("spread", cfg.data.spread);
        } else {
            cfg.data.train_path = dr.get_string("train", "");
            cfg.data.test_path = dr.get_string("test", "");
            if (cfg.data.train_path.empty())
                throw config_error("config key 'data.train': required when data.kind is 'csv'");
            if (cfg.data.test_path.empty())
                throw config_error("config key 'data.test': required when data.kind is 'csv'");
        }
        dr.finish();
    }

    cfg.root_size = r.get_int("root_size", cfg.root_size);
    cfg.root_case = parse_root_case(r.get_string("root_case", "case1"));
    cfg.bias_probability = r.get_double("bias_probability", cfg.bias_probability);
    cfg.biased_class = r.get_int("biased_class", cfg.biased_class);

    cfg.agg.rule = parse_rule(r.get_string("rule", "fedavg"));
    cfg.agg.variant = parse_variant(r.get_string("variant", "standard"));
    const bool f_given = r.find("f") != nullptr;
    if (f_given) cfg.agg.krum_f = r.get_int("f", 0);
    const bool k_given = r.find("k") != nullptr;
    if (k_given) cfg.agg.trim_k = r.get_int("k", 0);

    cfg.attack.kind = parse_attack(r.get_string("attack", "none"));
    cfg.attack.m_fraction = r.get_double("m_fraction", cfg.attack.m_fraction);
    cfg.attack.poison_p = r.get_double("poison_p", cfg.attack.poison_p);
    cfg.attack.scale_lambda = r.get_double("scale_lambda", cfg.attack.scale_lambda);
    if (const json* t = r.find("trigger")) {
        ObjectReader tr(*t, "trigger");
        if (tr.find("every_kth") != nullptr) {
            const int every = tr.get_int("every_kth", 0);
            const double value = tr.get_double("value", 1.0);
            const int target = tr.get_int("target_label", 0);
            if (cfg.data.kind != DataKind::Synthetic)
                throw config_error(
                    "config key 'trigger.every_kth': use explicit 'indices' when data.kind is "
                    "'csv'");
            cfg.attack.trigger = TriggerSpec::every_kth(cfg.data.input_dim, every, value, target);
        } else {
            if (const json* idx = tr.find("indices"))
                cfg.attack.trigger.indices = int_array(*idx, tr.qualify("indices"));
            if (const json* vals = tr.find("values"))
                cfg.attack.trigger.values = double_array(*vals, tr.qualify("values"));
            cfg.attack.trigger.target_label = tr.get_int("target_label", 0);
        }
        tr.finish();
    }
    cfg.attack.sigma2 = r.get_double("sigma2", cfg.attack.sigma2);
    cfg.attack.gamma = r.get_double("gamma", cfg.attack.gamma);
    cfg.attack.eta = r.get_double("eta", cfg.attack.eta);
    cfg.attack.steps_q = r.get_int("Q", cfg.attack.steps_q);
    cfg.attack.sweeps_v = r.get_int("V", cfg.attack.sweeps_v);
    cfg.attack.lambda_init = r.get_double("lambda_init", cfg.attack.lambda_init);
    cfg.attack.lambda_floor = r.get_double("lambda_floor", cfg.attack.lambda_floor);

    cfg.eval_stride = r.get_int("eval_stride", cfg.eval_stride);
    cfg.init_scale = r.get_double("init_scale", cfg.init_scale);
    cfg.divergence_limit = r.get_double("divergence_limit", cfg.divergence_limit);
    r.finish();

    // The robust-rule parameters track the malicious count unless set.
    if (!f_given) cfg.agg.krum_f = cfg.resolved_m();
    if (!k_given) cfg.agg.trim_k = cfg.resolved_m();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["n"] = cfg.n;
    j["tau"] = cfg.tau;
    j["R_g"] = cfg.rounds;
    j["R_l"] = cfg.local_iters;
    j["b"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["q"] = cfg.q;
    j["model"] = model_name(cfg.model);
    j["hidden_dim"] = cfg.hidden_dim;
    json d;
    if (cfg.data.kind == DataKind::Synthetic) {
        d["kind"] = "synthetic";
        d["classes"] = cfg.data.classes;
        d["input_dim"] = cfg.data.input_dim;
        d["per_class"] = cfg.data.per_class;
        d["test_per_class"] = cfg.data.test_per_class;
        d["spread"] = cfg.data.spread;
    } else {
        d["kind"] = "csv";
        d["train"] = cfg.data.train_path;
        d["test"] = cfg.data.test_path;
    }
    j["data"] = d;
    j["root_size"] = cfg.root_size;
    j["root_case"] = cfg.root_case == RootCase::CaseII ? "case2" : "case1";
    j["bias_probability"] = cfg.bias_probability;
    j["biased_class"] = cfg.biased_class;
    j["rule"] = rule_name(cfg.agg.rule);
    j["variant"] = variant_name(cfg.agg.variant);
    j["f"] = cfg.agg.krum_f;
    j["k"] = cfg.agg.trim_k;
    j["attack"] = attack_name(cfg.attack.kind);
    j["m_fraction"] = cfg.attack.m_fraction;
    j["poison_p"] = cfg.attack.poison_p;
    j["scale_lambda"] = cfg.attack.scale_lambda;
    if (cfg.attack.trigger.empty()) {
        j["trigger"] = nullptr;
    } else {
        json t;
        t["indices"] = cfg.attack.trigger.indices;
        t["values"] = cfg.attack.trigger.values;
        t["target_label"] = cfg.attack.trigger.target_label;
        j["trigger"] = t;
    }
    j["sigma2"] = cfg.attack.sigma2;
    j["gamma"] = cfg.attack.gamma;
    j["eta"] = cfg.attack.eta;
    j["Q"] = cfg.attack.steps_q;
    j["V"] = cfg.attack.sweeps_v;
    j["lambda_init"] = cfg.attack.lambda_init;
    j["lambda_floor"] = cfg.attack.lambda_floor;
    j["eval_stride"] = cfg.eval_stride;
    j["init_scale"] = cfg.init_scale;
    j["divergence_limit"] = cfg.divergence_limit;
    return j;
}

// A previously written summary.json carries the config under "config";
// feeding it back reproduces that run.
json unwrap_manifest(json j) {
    if (j.is_object() && j.contains("config") && j.at("config").is_object())
        return j.at("config");
    return j;
}

json parse_json_text(const std::string& text) {
    try {
        return unwrap_manifest(json::parse(text));
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
}

json load_config_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json_text(buf.str());
}

// key=value with dotted paths; the value is JSON when it parses, a bare
// string otherwise (so rule=fltrust needs no quoting).
void apply_override(json& root, const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
        throw config_error("override '" + text + "': expected key=value");
    const std::string path = text.substr(0, eq);
    const std::string raw = text.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto point = path.find('.', start);
        const std::string key =
            path.substr(start, point == std::string::npos ? std::string::npos : point - start);
        if (key.empty()) throw config_error("override '" + text + "': empty key segment");
        if (point == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (!node->is_object() && !node->is_null()) *node = json::object();
        start = point + 1;
    }
}

// --- artifact writing ----------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);  // binary keeps '\n' endings everywhere
    if (!out) throw config_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw config_error("write failed for '" + path.string() + "'");
}

void append_field(std::string& row, double v) {
    if (!std::isnan(v)) row += format_double(v);
}

std::string history_csv(const std::vector<RoundRecord>& history) {
    std::string text = "round,train_err,test_err,attack_success,g_norm,g0_norm,trust_sum\n";
    for (const RoundRecord& r : history) {
        text += std::to_string(r.round);
        text += ',';
        append_field(text, r.train_err);
        text += ',';
        append_field(text, r.test_err);
        text += ',';
        append_field(text, r.attack_success);
        text += ',';
        append_field(text, r.g_norm);
        text += ',';
        append_field(text, r.g0_norm);
        text += ',';
        append_field(text, r.trust_sum);
        text += '\n';
    }
    return text;
}

std::string summary_json(const ExperimentConfig& cfg, const MetricsReport& m) {
    json top;
    top["tool_version"] = kToolVersion;
    top["seed"] = cfg.seed;
    top["config"] = config_to_json(cfg);
    top["artifacts"] = json{{"history", "history.csv"}, {"summary", "summary.json"}};
    json metrics;
    metrics["rounds"] = static_cast<int>(m.history.size());
    metrics["final_train_error"] = m.history.empty() ? 0.0 : m.history.back().train_err;
    metrics["final_test_error"] = m.final_test_error;
    if (m.final_attack_success) metrics["final_attack_success"] = *m.final_attack_success;
    top["metrics"] = metrics;
    return top.dump(2) + "\n";
}

// Runs one validated config and writes its artifacts; divergence_error
// propagates to the caller.
MetricsReport run_point(const ExperimentConfig& cfg, const fs::path& dir) {
    ExperimentResult result = run_experiment(cfg);
    fs::create_directories(dir);
    write_text_file(dir / "history.csv", history_csv(result.metrics.history));
    write_text_file(dir / "summary.json", summary_json(cfg, result.metrics));
    return std::move(result.metrics);
}

std::string axis_key(const std::string& axis) {
    if (axis == "malicious_fraction") return "m_fraction";
    if (axis == "root_size" || axis == "bias_probability" || axis == "q") return axis;
    throw config_error("sweep axis '" + axis +
                       "': expected malicious_fraction | root_size | bias_probability | q");
}

void set_axis_value(json& j, const std::string& key, double value) {
    if (key == "root_size") {
        const auto iv = static_cast<long long>(std::llround(value));
        if (std::fabs(value - static_cast<double>(iv)) > 1e-9)
            throw config_error("sweep axis 'root_size': values must be integers");
        j[key] = iv;
    } else {
        j[key] = value;
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg = config_from_json(parse_json_text(text));
    cfg.validate();
    return cfg;
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    return config_to_json(cfg).dump(2) + "\n";
}

int cmd_run(const RunOptions& opt) {
    try {
        json j = load_config_json(opt.config_path);
        for (const std::string& o : opt.overrides) apply_override(j, o);
        if (opt.seed) j["seed"] = *opt.seed;
        ExperimentConfig cfg = config_from_json(j);
        cfg.validate();
        const MetricsReport metrics = run_point(cfg, opt.out_dir);
        std::cout << "final_test_error " << format_double(metrics.final_test_error);
        if (metrics.final_attack_success)
            std::cout << "  final_attack_success " << format_double(*metrics.final_attack_success);
        std::cout << '\n';
        return kExitOk;
    } catch (const divergence_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cmd_sweep(const SweepOptions& opt) {
    try {
        const std::string key = axis_key(opt.axis);
        if (opt.values.empty()) throw config_error("sweep: needs at least one value");
        json base = load_config_json(opt.config_path);
        for (const std::string& o : opt.overrides) apply_override(base, o);
        if (opt.seed) base["seed"] = *opt.seed;

        fs::create_directories(opt.out_dir);
        std::string rows = "value,final_test_err,final_attack_success\n";
        for (std::size_t i = 0; i < opt.values.size(); ++i) {
            json j = base;
            set_axis_value(j, key, opt.values[i]);
            ExperimentConfig cfg = config_from_json(j);
            cfg.validate();
            const fs::path sub = fs::path(opt.out_dir) / ("point_" + std::to_string(i));
            rows += format_double(opt.values[i]);
            try {
                const MetricsReport metrics = run_point(cfg, sub);
                rows += ',';
                rows += format_double(metrics.final_test_error);
                rows += ',';
                if (metrics.final_attack_success)
                    rows += format_double(*metrics.final_attack_success);
            } catch (const divergence_error& e) {
                // A diverged point keeps its row; the sweep goes on.
                std::cerr << "point " << i << ": " << e.what() << '\n';
                rows += ",,";
            }
            rows += '\n';
        }
        write_text_file(fs::path(opt.out_dir) / "sweep.csv", rows);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cmd_verify(std::uint64_t seed) {
    try {
        bool all_ok = true;
        for (const verify::SuiteResult& s : verify::run_all(seed)) {
            std::ostringstream line;
            line << (s.passed() ? "[PASS] " : "[FAIL] ") << s.suite << ": " << s.trials
                 << " trials, " << s.failures << " failures (" << std::fixed
                 << std::setprecision(2) << s.seconds << "s)";
            if (!s.passed() && !s.detail.empty()) line << " [" << s.detail << "]";
            std::cout << line.str() << '\n';
            all_ok = all_ok && s.passed();
        }
        return all_ok ? kExitOk : kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvariant;
    }
}

int cmd_gen_synthetic(const GenSyntheticOptions& opt) {
    try {
        const Dataset data =
            generate_synthetic(opt.classes, opt.input_dim, opt.per_class, opt.spread, opt.seed);
        save_csv(opt.out, data);
        std::cout << "wrote " << opt.out << " (" << data.size() << " examples)\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cmd_gen_idx_convert(const GenIdxConvertOptions& opt) {
    try {
        const Dataset data = load_idx(opt.images, opt.labels);
        save_csv(opt.out, data);
        std::cout << "wrote " << opt.out << " (" << data.size() << " examples)\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace fltrust::cli
