#include "qns/cli.hpp"

#include "qns/parallel.hpp"
#include "qns/random.hpp"
#include "qns/spectral.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <variant>

namespace qns {

namespace {

using json = nlohmann::json;

using Field = std::variant<int RunConfig::*, std::uint64_t RunConfig::*, double RunConfig::*, bool RunConfig::*,
                           std::string RunConfig::*, std::vector<double> RunConfig::*, std::optional<int> RunConfig::*,
                           std::optional<double> RunConfig::*, std::optional<bool> RunConfig::*,
                           std::optional<std::vector<double>> RunConfig::*, std::vector<Site> RunConfig::*>;

struct Key {
    const char* name;
    Field field;
};

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        {"experiment", &RunConfig::experiment},
        {"output_dir", &RunConfig::output_dir},
        {"seed", &RunConfig::seed},
        {"threads", &RunConfig::threads},
        {"lattice_preset", &RunConfig::lattice_preset},
        {"rows", &RunConfig::rows},
        {"cols", &RunConfig::cols},
        {"coupling_mhz", &RunConfig::coupling_mhz},
        {"readout_index", &RunConfig::readout_index},
        {"inactive_sites", &RunConfig::inactive_sites},
        {"h_mhz", &RunConfig::h_mhz},
        {"times_ns", &RunConfig::times_ns},
        {"realizations", &RunConfig::realizations},
        {"h_over_g", &RunConfig::h_over_g},
        {"sector_excitations", &RunConfig::sector_excitations},
        {"central_fraction", &RunConfig::central_fraction},
        {"h_erg_mhz", &RunConfig::h_erg_mhz},
        {"h_loc_mhz", &RunConfig::h_loc_mhz},
        {"t_state_ns", &RunConfig::t_state_ns},
        {"n_train_per_class", &RunConfig::n_train_per_class},
        {"n_test_per_class", &RunConfig::n_test_per_class},
        {"n_per_class", &RunConfig::n_per_class},
        {"init_search", &RunConfig::init_search},
        {"init_candidates", &RunConfig::init_candidates},
        {"init_per_class", &RunConfig::init_per_class},
        {"epochs", &RunConfig::epochs},
        {"layers", &RunConfig::layers},
        {"optimizer", &RunConfig::optimizer},
        {"learning_rate", &RunConfig::learning_rate},
        {"beta1", &RunConfig::beta1},
        {"beta2", &RunConfig::beta2},
        {"adam_epsilon", &RunConfig::adam_epsilon},
        {"w_ergodic", &RunConfig::w_ergodic},
        {"w_localized", &RunConfig::w_localized},
        {"gradient_mode", &RunConfig::gradient_mode},
        {"fd_step", &RunConfig::fd_step},
        {"batch_mode", &RunConfig::batch_mode},
        {"t0_ns", &RunConfig::t0_ns},
        {"threshold", &RunConfig::threshold},
        {"calibrate_threshold", &RunConfig::calibrate_threshold},
        {"noise_enabled", &RunConfig::noise_enabled},
        {"noise_f00", &RunConfig::noise_f00},
        {"noise_f11", &RunConfig::noise_f11},
        {"noise_shots", &RunConfig::noise_shots},
        {"model_path", &RunConfig::model_path},
        {"profiles_per_point", &RunConfig::profiles_per_point},
        {"t_grid_ns", &RunConfig::t_grid_ns},
        {"retrain_t0_ns", &RunConfig::retrain_t0_ns},
        {"time_sweep_per_class", &RunConfig::time_sweep_per_class},
        {"ramp_grid_ns", &RunConfig::ramp_grid_ns},
        {"hold_ns", &RunConfig::hold_ns},
        {"idle_offset_mhz", &RunConfig::idle_offset_mhz},
        {"ramp_h_mhz", &RunConfig::ramp_h_mhz},
        {"max_step_ns", &RunConfig::max_step_ns},
    };
    return k;
}

const Key* find_key(const std::string& name) {
    for (const Key& k : keys())
        if (name == k.name) return &k;
    return nullptr;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
}

// JSON value -> field, with the key named in every error.

int as_int(const std::string& key, const json& j) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(key, "integer out of range");
    return static_cast<int>(v);
}

std::uint64_t as_u64(const std::string& key, const json& j) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
    bad(key, "expected a non-negative integer");
}

double as_double(const std::string& key, const json& j) {
    if (!j.is_number()) bad(key, "expected a number");
    return j.get<double>();
}

bool as_bool(const std::string& key, const json& j) {
    if (!j.is_boolean()) bad(key, "expected true or false");
    return j.get<bool>();
}

std::string as_string(const std::string& key, const json& j) {
    if (!j.is_string()) bad(key, "expected a string");
    return j.get<std::string>();
}

std::vector<double> as_grid(const std::string& key, const json& j) {
    if (j.is_string()) {
        try {
            return parse_range(j.get<std::string>());
        } catch (const std::invalid_argument& e) {
            bad(key, e.what());
        }
    }
    if (!j.is_array()) bad(key, "expected a range string or an array of numbers");
    std::vector<double> v;
    for (const json& x : j) v.push_back(as_double(key, x));
    return v;
}

std::vector<Site> as_sites(const std::string& key, const json& j) {
    if (!j.is_array()) bad(key, "expected an array of [row, col] pairs");
    std::vector<Site> v;
    for (const json& s : j) {
        if (!s.is_array() || s.size() != 2) bad(key, "expected an array of [row, col] pairs");
        v.push_back({as_int(key, s[0]), as_int(key, s[1])});
    }
    return v;
}

void assign(RunConfig& c, const Key& key, const json& j) {
    const std::string k = key.name;
    std::visit(
        [&](auto member) {
            using T = std::remove_reference_t<decltype(c.*member)>;
            if constexpr (std::is_same_v<T, int>) c.*member = as_int(k, j);
            else if constexpr (std::is_same_v<T, std::uint64_t>) c.*member = as_u64(k, j);
            else if constexpr (std::is_same_v<T, double>) c.*member = as_double(k, j);
            else if constexpr (std::is_same_v<T, bool>) c.*member = as_bool(k, j);
            else if constexpr (std::is_same_v<T, std::string>) c.*member = as_string(k, j);
            else if constexpr (std::is_same_v<T, std::vector<double>>) c.*member = as_grid(k, j);
            else if constexpr (std::is_same_v<T, std::vector<Site>>) c.*member = as_sites(k, j);
            else if constexpr (std::is_same_v<T, std::optional<int>>) c.*member = j.is_null() ? T{} : T{as_int(k, j)};
            else if constexpr (std::is_same_v<T, std::optional<double>>) c.*member = j.is_null() ? T{} : T{as_double(k, j)};
            else if constexpr (std::is_same_v<T, std::optional<bool>>) c.*member = j.is_null() ? T{} : T{as_bool(k, j)};
            else c.*member = j.is_null() ? T{} : T{as_grid(k, j)};
        },
        key.field);
}

json field_json(const RunConfig& c, const Key& key) {
    return std::visit(
        [&](auto member) -> json {
            using T = std::remove_cvref_t<decltype(c.*member)>;
            const auto& v = c.*member;
            if constexpr (std::is_same_v<T, std::vector<Site>>) {
                json a = json::array();
                for (const Site& s : v) a.push_back({s.row, s.col});
                return a;
            } else if constexpr (requires { v.has_value(); }) {
                return v ? json(*v) : json(nullptr);
            } else {
                return json(v);
            }
        },
        key.field);
}

// Flag text -> JSON value of the field's type.

template <typename T>
bool parse_whole(const std::string& s, T& out) {
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, out);
    return r.ec == std::errc() && r.ptr == end;
}

json flag_json(const Key& key, const std::string& text) {
    const std::string k = key.name;
    const auto number = [&](bool integral) -> json {
        if (integral) {
            if (std::int64_t i; parse_whole(text, i)) return i;
            if (std::uint64_t u; parse_whole(text, u)) return u;
            bad(k, "expected an integer, got '" + text + "'");
        }
        if (double d; parse_whole(text, d)) return d;
        bad(k, "expected a number, got '" + text + "'");
    };
    const auto parse_json_text = [&]() -> json {
        try {
            return json::parse(text);
        } catch (const json::exception&) {
            bad(k, "malformed value '" + text + "'");
        }
    };
    return std::visit(
        [&](auto member) -> json {
            using T = std::remove_reference_t<decltype(std::declval<RunConfig&>().*member)>;
            if constexpr (!std::is_same_v<T, std::string> && !std::is_same_v<T, std::vector<Site>> &&
                          !std::is_same_v<T, std::vector<double>>) {
                if (text == "null") {
                    if constexpr (requires(T t) { t.reset(); }) return nullptr;
                    bad(k, "null is not allowed");
                }
            }
            if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t> ||
                          std::is_same_v<T, std::optional<int>>)
                return number(true);
            else if constexpr (std::is_same_v<T, double> || std::is_same_v<T, std::optional<double>>)
                return number(false);
            else if constexpr (std::is_same_v<T, bool> || std::is_same_v<T, std::optional<bool>>) {
                if (text == "true" || text == "1") return true;
                if (text == "false" || text == "0") return false;
                bad(k, "expected true or false, got '" + text + "'");
            } else if constexpr (std::is_same_v<T, std::string>)
                return text;
            else if constexpr (std::is_same_v<T, std::vector<Site>>)
                return parse_json_text();
            else {
                if (!text.empty() && text.front() == '[') return parse_json_text();
                if (text == "null") return nullptr;
                return text;
            }
        },
        key.field);
}

bool calibrate_by_default(const std::string& experiment) {
    return experiment == "probe" || experiment == "sweep-disorder" || experiment == "sweep-time";
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) bad(key, what);
}

void require_ascending(const std::vector<double>& v, const std::string& key) {
    require(!v.empty(), key, "must not be empty");
    require(v.front() >= 0.0, key, "values must be >= 0");
    require(std::is_sorted(v.begin(), v.end()), key, "values must be ascending");
}

LatticeOptions lattice_options(const RunConfig& c) {
    LatticeOptions o;
    o.rows = c.rows;
    o.cols = c.cols;
    o.inactive_sites = c.inactive_sites;
    o.coupling_mhz = c.coupling_mhz.value_or(2.185);
    o.readout_index = c.readout_index;
    return o;
}

void resolve_and_validate(RunConfig& c) {
    const auto& kinds = experiment_kinds();
    require(std::find(kinds.begin(), kinds.end(), c.experiment) != kinds.end(), "experiment",
            "unknown experiment '" + c.experiment + "'");
    if (!c.coupling_mhz) c.coupling_mhz = c.experiment == "ramping" ? 2.0 : 2.185;

    LatticeSpec lattice;
    try {
        lattice = qns::build_lattice(lattice_options(c));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("lattice: ") + e.what());
    }
    c.readout_index = lattice.readout_index();
    if (!c.sector_excitations) c.sector_excitations = std::popcount(neel_pattern(lattice));
    if (!c.realizations)
        c.realizations = c.experiment == "imbalance" ? 50 : c.experiment == "ramping" ? 5 : 200;
    if (!c.h_over_g) c.h_over_g = parse_range(c.experiment == "sweep-disorder" ? "0.46:18.3:20" : "0.5:18:20");
    if (!c.calibrate_threshold) c.calibrate_threshold = calibrate_by_default(c.experiment);
    if (c.times_ns.empty()) c.times_ns = parse_range("0:400:81");
    if (c.t_grid_ns.empty()) c.t_grid_ns = parse_range("log:6:501:15");
    if (c.retrain_t0_ns.empty()) c.retrain_t0_ns = {100.0, 200.0, 300.0, 400.0};
    if (c.ramp_grid_ns.empty()) c.ramp_grid_ns = parse_range("0:100:26");
    if (c.threads == 0) c.threads = thread_count();

    require(c.threads >= 1, "threads", "must be >= 0");
    require(!c.output_dir.empty(), "output_dir", "must not be empty");
    require(c.h_mhz >= 0.0, "h_mhz", "must be >= 0");
    require_ascending(c.times_ns, "times_ns");
    require(*c.realizations >= 1, "realizations", "must be >= 1");
    require(!c.h_over_g->empty(), "h_over_g", "must not be empty");
    for (double x : *c.h_over_g) require(x >= 0.0, "h_over_g", "values must be >= 0");
    require(*c.sector_excitations >= 0 && *c.sector_excitations <= lattice.num_qubits(), "sector_excitations",
            "must lie in [0, number of qubits]");
    require(c.central_fraction > 0.0 && c.central_fraction <= 1.0, "central_fraction", "must lie in (0, 1]");
    require(c.h_erg_mhz >= 0.0, "h_erg_mhz", "must be >= 0");
    require(c.h_loc_mhz >= 0.0, "h_loc_mhz", "must be >= 0");
    require(c.t_state_ns >= 0.0, "t_state_ns", "must be >= 0");
    require(c.n_train_per_class >= 1, "n_train_per_class", "must be >= 1");
    require(c.n_test_per_class >= 1, "n_test_per_class", "must be >= 1");
    require(c.n_per_class >= 1, "n_per_class", "must be >= 1");
    require(c.init_candidates >= 1, "init_candidates", "must be >= 1");
    require(c.init_per_class >= 1, "init_per_class", "must be >= 1");
    require(c.epochs >= 1, "epochs", "must be >= 1");
    require(c.layers >= 1, "layers", "must be >= 1");
    const auto parsed = [&](const char* key, auto fn, const std::string& v) {
        try {
            fn(v);
        } catch (const std::invalid_argument& e) {
            bad(key, e.what());
        }
    };
    parsed("optimizer", parse_optimizer, c.optimizer);
    parsed("gradient_mode", parse_gradient_mode, c.gradient_mode);
    parsed("batch_mode", parse_batch_mode, c.batch_mode);
    require(c.learning_rate > 0.0, "learning_rate", "must be > 0");
    require(c.beta1 >= 0.0 && c.beta1 < 1.0, "beta1", "must lie in [0, 1)");
    require(c.beta2 >= 0.0 && c.beta2 < 1.0, "beta2", "must lie in [0, 1)");
    require(c.adam_epsilon > 0.0, "adam_epsilon", "must be > 0");
    require(c.w_ergodic > 0.0, "w_ergodic", "must be > 0");
    require(c.w_localized > 0.0, "w_localized", "must be > 0");
    require(c.fd_step > 0.0, "fd_step", "must be > 0");
    require(c.t0_ns >= 0.0, "t0_ns", "must be >= 0");
    require(c.threshold >= 0.0 && c.threshold <= 1.0, "threshold", "must lie in [0, 1]");
    require(c.noise_f00 > 0.5 && c.noise_f00 <= 1.0, "noise_f00", "must lie in (0.5, 1]");
    require(c.noise_f11 > 0.5 && c.noise_f11 <= 1.0, "noise_f11", "must lie in (0.5, 1]");
    require(c.noise_shots >= 0, "noise_shots", "must be >= 0");
    require(c.experiment != "classify" || !c.model_path.empty(), "model_path", "required by classify");
    require(c.profiles_per_point >= 1, "profiles_per_point", "must be >= 1");
    require_ascending(c.t_grid_ns, "t_grid_ns");
    for (double t : c.retrain_t0_ns) require(t >= 0.0, "retrain_t0_ns", "values must be >= 0");
    require(c.time_sweep_per_class >= 1, "time_sweep_per_class", "must be >= 1");
    require(!c.ramp_grid_ns.empty(), "ramp_grid_ns", "must not be empty");
    for (double t : c.ramp_grid_ns) require(t >= 0.0, "ramp_grid_ns", "values must be >= 0");
    require(c.hold_ns >= 0.0, "hold_ns", "must be >= 0");
    require(c.ramp_h_mhz >= 0.0, "ramp_h_mhz", "must be >= 0");
    require(c.max_step_ns > 0.0, "max_step_ns", "must be > 0");
    require(c.experiment != "probe" || (c.rows == 3 && c.cols == 3 && c.inactive_sites.empty()), "rows",
            "probe requires the full 3x3 lattice");
}

// ---------------------------------------------------------------------------
// Experiment plumbing

ClassificationConfig classification_config(const RunConfig& c) {
    ClassificationConfig k;
    k.n_train_per_class = c.n_train_per_class;
    k.n_test_per_class = c.n_test_per_class;
    k.h_erg_mhz = c.h_erg_mhz;
    k.h_loc_mhz = c.h_loc_mhz;
    k.t_state_ns = c.t_state_ns;
    k.init_search = c.init_search;
    k.init_candidates = c.init_candidates;
    k.init_per_class = c.init_per_class;
    TrainingConfig& t = k.training;
    t.epochs = c.epochs;
    t.layers = c.layers;
    t.optimizer = parse_optimizer(c.optimizer);
    t.learning_rate = c.learning_rate;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.adam_epsilon = c.adam_epsilon;
    t.weights = {c.w_ergodic, c.w_localized};
    t.gradient_mode = parse_gradient_mode(c.gradient_mode);
    t.fd_step = c.fd_step;
    t.t0_ns = c.t0_ns;
    t.batch_mode = parse_batch_mode(c.batch_mode);
    t.threshold = c.threshold;
    t.calibrate_threshold = c.calibrate_threshold.value_or(false);
    k.noise_enabled = c.noise_enabled;
    k.noise = {c.noise_f00, c.noise_f11, c.noise_shots, derive_seed(c.seed, "noise")};
    k.seed = c.seed;
    return k;
}

Table history_table(const TrainedModel& m) {
    Table t{"history", {"epoch", "loss", "train_acc", "test_acc"}, {}};
    for (const EpochRecord& r : m.history)
        t.add({std::int64_t{r.epoch}, r.loss, r.train_accuracy, r.test_accuracy});
    return t;
}

Table init_table(const InitSearchResult& init) {
    Table t{"init_candidates", {"candidate", "loss", "accuracy", "selected"}, {}};
    for (std::size_t i = 0; i < init.candidates.size(); ++i)
        t.add({std::int64_t(i), init.candidates[i].loss, init.candidates[i].accuracy,
               std::int64_t{static_cast<int>(i) == init.best_index}});
    return t;
}

Table predictions_table(const std::string& name, std::span<const LabeledSample> samples, std::span<const double> raw,
                        std::span<const double> probs, double threshold) {
    Table t{name, {"index", "label", "h_mhz", "sample_seed", "p_raw", "p", "predicted"}, {}};
    for (std::size_t i = 0; i < samples.size(); ++i)
        t.add({std::int64_t(i), std::int64_t{static_cast<int>(samples[i].label)}, samples[i].h_mhz, samples[i].seed,
               raw.empty() ? Cell{std::string()} : Cell{raw[i]}, probs[i],
               std::int64_t{static_cast<int>(classify(probs[i], threshold))}});
    return t;
}

json fit_json(const GaussianFit& f) { return {{"mean", f.mean}, {"stddev", f.stddev}, {"count", f.count}}; }

void add_classification(ExperimentRecord& rec, const ClassificationResult& r, const std::string& predictions) {
    rec.tables.push_back(history_table(r.model));
    rec.tables.push_back(predictions_table(predictions, r.test_samples, r.test_raw, r.test_probs, r.model.threshold));
    if (!r.init.candidates.empty()) rec.tables.push_back(init_table(r.init));
    rec.extra_files.push_back("model.json");
    rec.summary["test_accuracy"] = r.test_accuracy;
    rec.summary["test_accuracy_at_0.5"] = r.test_accuracy_default;
    rec.summary["threshold"] = r.model.threshold;
    rec.summary["fit_ergodic"] = fit_json(r.fit_ergodic);
    rec.summary["fit_localized"] = fit_json(r.fit_localized);
    rec.summary["first_epoch_loss"] = r.model.history.front().loss;
    rec.summary["last_epoch_loss"] = r.model.history.back().loss;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct ModelSource {
    TrainedModel model;
    LatticeSpec lattice;
};

// A model from model_path, or one trained in-process from the config.
ModelSource obtain_model(const RunConfig& c, ExperimentRecord& rec, std::optional<TrainedModel>& trained) {
    if (!c.model_path.empty()) {
        TrainedModel m = model_from_json(json::parse(read_text(c.model_path)));
        LatticeSpec lattice = qns::build_lattice(m.lattice).with_readout(m.params.readout_index);
        return {std::move(m), std::move(lattice)};
    }
    const LatticeSpec lattice = build_lattice(c);
    ClassificationResult r = run_classification_experiment(lattice, classification_config(c));
    rec.tables.push_back(history_table(r.model));
    rec.extra_files.push_back("model.json");
    rec.summary["model_test_accuracy"] = r.test_accuracy;
    trained = r.model;
    return {std::move(r.model), lattice};
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k = {"imbalance",   "level-stats", "train",   "classify", "sweep-disorder",
                                               "sweep-time",  "probe",       "ramping", "dataset"};
    return k;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const Key& k : keys()) out.emplace_back(k.name);
    return out;
}

std::vector<double> parse_range(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    const bool log = !parts.empty() && parts.front() == "log";
    if (log) parts.erase(parts.begin());
    if (parts.size() != 3)
        throw std::invalid_argument("range '" + text + "' must be start:stop:count or log:start:stop:count");
    double a = 0.0, b = 0.0;
    long n = 0;
    if (!parse_whole(parts[0], a) || !parse_whole(parts[1], b) || !parse_whole(parts[2], n))
        throw std::invalid_argument("range '" + text + "' has a malformed field");
    if (n < 1) throw std::invalid_argument("range '" + text + "' needs count >= 1");
    if (log && !(a > 0.0 && b > 0.0)) throw std::invalid_argument("log range '" + text + "' needs positive bounds");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        v[static_cast<std::size_t>(i)] = log ? a * std::pow(b / a, f) : a + (b - a) * f;
    }
    v.back() = n == 1 ? a : b;
    return v;
}

RunConfig parse_config(const json& file, const std::map<std::string, std::string>& flags, const std::string& experiment) {
    if (!file.is_object()) throw ConfigError("config: top level must be a JSON object");
    json merged = file;
    for (auto it = merged.begin(); it != merged.end(); ++it)
        if (!find_key(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    for (const auto& [name, text] : flags) {
        const Key* k = find_key(name);
        if (!k) throw ConfigError("unknown config key '" + name + "'");
        merged[name] = flag_json(*k, text);
    }
    if (merged.contains("experiment") && merged["experiment"] != json(experiment))
        bad("experiment", "config was written for '" + merged["experiment"].dump() + "', not '" + experiment + "'");
    merged["experiment"] = experiment;

    if (merged.contains("lattice_preset") && merged["lattice_preset"].is_string() &&
        !merged["lattice_preset"].get<std::string>().empty()) {
        LatticeOptions p;
        try {
            p = load_lattice_preset(merged["lattice_preset"].get<std::string>());
        } catch (const std::exception& e) {
            bad("lattice_preset", e.what());
        }
        RunConfig tmp;
        tmp.rows = p.rows;
        tmp.cols = p.cols;
        tmp.coupling_mhz = p.coupling_mhz;
        tmp.readout_index = p.readout_index;
        tmp.inactive_sites = p.inactive_sites;
        for (const char* name : {"rows", "cols", "coupling_mhz", "readout_index", "inactive_sites"})
            if (!merged.contains(name)) merged[name] = field_json(tmp, *find_key(name));
    }

    RunConfig c;
    for (auto it = merged.begin(); it != merged.end(); ++it) assign(c, *find_key(it.key()), it.value());
    resolve_and_validate(c);
    return c;
}

RunConfig parse_config_file(const std::string& path, const std::map<std::string, std::string>& flags,
                            const std::string& experiment) {
    json file;
    try {
        file = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(file, flags, experiment);
}

json to_json(const RunConfig& config) {
    json j = json::object();
    for (const Key& k : keys()) j[k.name] = field_json(config, k);
    return j;
}

LatticeSpec build_lattice(const RunConfig& config) { return qns::build_lattice(lattice_options(config)); }

ExperimentRecord dispatch(const RunConfig& c) {
    const auto start = std::chrono::steady_clock::now();
    set_thread_count(c.threads);
    ExperimentRecord rec;
    rec.kind = c.experiment;
    rec.config = to_json(c);
    rec.seed = c.seed;
    rec.summary = json::object();
    std::optional<TrainedModel> model_out;
    const std::string& e = c.experiment;

    if (e == "imbalance") {
        const LatticeSpec lattice = build_lattice(c);
        const ImbalanceResult r = run_imbalance_dynamics(lattice, c.h_mhz, c.times_ns, *c.realizations, c.seed);
        Table t{"imbalance", {"t_ns", "I_mean", "I_std", "realizations"}, {}};
        for (const auto& p : r.curve) t.add({p.t_ns, p.mean, p.stddev, std::int64_t{r.realizations}});
        rec.tables.push_back(std::move(t));
        rec.summary = {{"h_mhz", r.h_mhz}, {"I_200ns_mean", r.i200_mean}, {"I_200ns_std", r.i200_stddev}};
    } else if (e == "level-stats") {
        const LatticeSpec lattice = build_lattice(c);
        const auto curve = mean_gap_ratio_sweep(lattice, *c.sector_excitations, *c.h_over_g, *c.realizations, c.seed,
                                                {c.central_fraction});
        Table t{"level_stats", {"h_over_g", "r_mean", "r_stderr", "realizations", "skipped_degenerate"}, {}};
        for (const auto& p : curve)
            t.add({p.h_over_g, p.r_mean, p.r_stderr, std::int64_t{p.realizations}, std::int64_t{p.skipped_degenerate}});
        rec.tables.push_back(std::move(t));
        std::size_t peak = 0;
        for (std::size_t i = 1; i < curve.size(); ++i)
            if (curve[i].r_mean > curve[peak].r_mean) peak = i;
        rec.summary = {{"r_max", curve[peak].r_mean}, {"h_over_g_at_max", curve[peak].h_over_g},
                       {"r_last", curve.back().r_mean}};
        if (curve.size() - peak >= 2) {
            std::vector<double> x, y;
            for (std::size_t i = peak; i < curve.size(); ++i) {
                x.push_back(curve[i].h_over_g);
                y.push_back(curve[i].r_mean);
            }
            rec.summary["spearman_from_peak"] = spearman_correlation(x, y);
        }
    } else if (e == "train" || e == "probe") {
        const LatticeSpec lattice = build_lattice(c);
        const ClassificationConfig k = classification_config(c);
        const ClassificationResult r =
            e == "train" ? run_classification_experiment(lattice, k) : run_probe_experiment(lattice, k);
        add_classification(rec, r, "test_predictions");
        model_out = r.model;
    } else if (e == "classify") {
        const TrainedModel m = model_from_json(json::parse(read_text(c.model_path)));
        const LatticeSpec lattice = qns::build_lattice(m.lattice).with_readout(m.params.readout_index);
        const auto samples = generate_dataset(lattice, c.n_test_per_class, c.h_erg_mhz, c.h_loc_mhz, c.t_state_ns,
                                              derive_seed(c.seed, "classify-data"));
        auto p = evaluate_model(m, lattice, samples);
        if (c.noise_enabled) {
            const NoiseModel noise{c.noise_f00, c.noise_f11, c.noise_shots, derive_seed(c.seed, "noise")};
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = apply_readout_noise(p[i], noise, i);
        }
        std::vector<int> labels;
        for (const auto& s : samples) labels.push_back(static_cast<int>(s.label));
        rec.tables.push_back(predictions_table("predictions", samples, {}, p, m.threshold));
        rec.summary = {{"accuracy", accuracy(p, labels, m.threshold)}, {"threshold", m.threshold}};
    } else if (e == "sweep-disorder") {
        const ModelSource src = obtain_model(c, rec, model_out);
        const auto sweep = run_disorder_sweep(src.model, src.lattice, *c.h_over_g, c.profiles_per_point,
                                              derive_seed(c.seed, "sweep-disorder"), c.t_state_ns);
        const int k = std::popcount(neel_pattern(src.lattice));
        const auto rbar = mean_gap_ratio_sweep(src.lattice, k, *c.h_over_g, *c.realizations, c.seed, {c.central_fraction});
        Table t{"sweep_disorder", {"h_over_g", "h_mhz", "p_localized", "mean_p", "profiles", "r_mean"}, {}};
        std::vector<double> x, p, r;
        for (std::size_t i = 0; i < sweep.size(); ++i) {
            t.add({sweep[i].h_over_g, sweep[i].h_mhz, sweep[i].p_localized, sweep[i].mean_p,
                   std::int64_t{sweep[i].profiles}, rbar[i].r_mean});
            x.push_back(sweep[i].h_over_g);
            p.push_back(sweep[i].p_localized);
            r.push_back(rbar[i].r_mean);
        }
        rec.tables.push_back(std::move(t));
        rec.summary["threshold"] = src.model.threshold;
        if (x.size() >= 2) {
            try {
                rec.summary["spearman_p_vs_h"] = spearman_correlation(x, p);
                rec.summary["correlation_p_vs_r"] = correlation_coefficient(p, r);
            } catch (const std::invalid_argument&) {
                rec.summary["spearman_p_vs_h"] = nullptr;  // flat curve
            }
        }
    } else if (e == "sweep-time") {
        const ModelSource src = obtain_model(c, rec, model_out);
        TimeSweepConfig tc;
        tc.per_class = c.time_sweep_per_class;
        tc.h_erg_mhz = c.h_erg_mhz;
        tc.h_loc_mhz = c.h_loc_mhz;
        tc.retrain_t0_ns = c.retrain_t0_ns;
        tc.retrain = classification_config(c);
        tc.seed = derive_seed(c.seed, "sweep-time");
        const TimeSweepResult r = run_time_sweep(src.model, src.lattice, c.t_grid_ns, tc);
        Table t{"sweep_time",
                {"t_ns", "mean_p_ergodic", "std_p_ergodic", "mean_p_localized", "std_p_localized", "separation",
                 "accuracy"},
                {}};
        for (const auto& p : r.points)
            t.add({p.t_ns, p.mean_p_ergodic, p.std_p_ergodic, p.mean_p_localized, p.std_p_localized, p.separation,
                   p.accuracy});
        rec.tables.push_back(std::move(t));
        Table rt{"retrain", {"t0_ns", "test_accuracy", "threshold"}, {}};
        for (const auto& p : r.retrain) rt.add({p.t0_ns, p.test_accuracy, p.threshold});
        rec.tables.push_back(std::move(rt));
        rec.summary["threshold"] = src.model.threshold;
    } else if (e == "ramping") {
        const LatticeSpec lattice = build_lattice(c);
        RampingConfig rc;
        rc.hold_ns = c.hold_ns;
        rc.idle_offset_mhz = c.idle_offset_mhz;
        rc.h_mhz = c.ramp_h_mhz;
        rc.max_step_ns = c.max_step_ns;
        rc.realizations = *c.realizations;
        rc.seed = c.seed;
        const auto curve = run_ramping_study(lattice, c.ramp_grid_ns, rc);
        Table t{"ramping", {"t_ramp_ns", "F_mean", "F_std", "steps", "realizations"}, {}};
        for (const auto& p : curve)
            t.add({p.t_ramp_ns, p.f_mean, p.f_stddev, std::int64_t{p.steps}, std::int64_t{rc.realizations}});
        rec.tables.push_back(std::move(t));
    } else if (e == "dataset") {
        const LatticeSpec lattice = build_lattice(c);
        Table t{"dataset", {"split", "index", "label", "h_mhz", "sample_seed", "t_state_ns"}, {}};
        const auto emit = [&](const std::string& split, int per_class, const char* stream) {
            const auto s = generate_dataset(lattice, per_class, c.h_erg_mhz, c.h_loc_mhz, c.t_state_ns,
                                            derive_seed(c.seed, stream));
            for (std::size_t i = 0; i < s.size(); ++i)
                t.add({split, std::int64_t(i), std::int64_t{static_cast<int>(s[i].label)}, s[i].h_mhz, s[i].seed,
                       s[i].t_state_ns});
        };
        // Same seed streams as the classification experiment.
        emit("train", c.n_train_per_class, "train-data");
        emit("test", c.n_test_per_class, "test-data");
        if (c.init_search) emit("init", c.init_per_class, "init-data");
        rec.tables.push_back(std::move(t));
    }

    rec.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::filesystem::path dir(c.output_dir);
    std::filesystem::create_directories(dir);
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");
    for (const Table& t : rec.tables) write_text(dir / (t.name + ".csv"), t.to_csv());
    if (model_out) write_text(dir / "model.json", to_json(*model_out).dump(2) + "\n");
    write_text(dir / "record.json", rec.to_json().dump(2) + "\n");
    return rec;
}

int run_command(const std::string& experiment, const std::string& config_path,
                const std::map<std::string, std::string>& flags, std::ostream& err) {
    const auto fail = [&](const char* kind, const std::string& message, int code) {
        err << json{{"error", kind}, {"message", message}}.dump() << '\n';
        return code;
    };
    RunConfig config;
    try {
        config = config_path.empty() ? parse_config(json::object(), flags, experiment)
                                     : parse_config_file(config_path, flags, experiment);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kExitConfig);
    } catch (const std::exception& e) {
        return fail("config", e.what(), kExitConfig);
    }
    try {
        dispatch(config);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), kExitRuntime);
    }
    return kExitOk;
}

}  // namespace qns
