#include "shadownet/cli_harness.hpp"

#include "shadownet/diagnostics.hpp"
#include "shadownet/errors.hpp"
#include "shadownet/inference.hpp"
#include "shadownet/lemma_suite.hpp"
#include "shadownet/shadow_model.hpp"
#include "shadownet/theory_checks.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace shadownet {

using nlohmann::json;

namespace {

constexpr Command kCommands[] = {Command::gen,     Command::invert,   Command::scaling, Command::lemmas,
                                 Command::diag,    Command::support,  Command::twolayer, Command::train};

enum class Kind { uint, real, boolean, string, uint_list, real_list, shape_or_null };

struct Key {
    const char* name;
    Kind kind;
    json fallback;
};

std::vector<Key> schema(Command c) {
    switch (c) {
        case Command::gen:
            return {{"widths", Kind::uint_list, json::array({2048, 512, 128})},
                    {"sparsities", Kind::uint_list, json::array()},
                    {"top_sparsity", Kind::uint, 4},
                    {"mode", Kind::string, "fixed-subset"},
                    {"value_mode", Kind::string, "binary"},
                    {"samples", Kind::uint, 10}};
        case Command::invert:
            return {{"k", Kind::uint, 16},         {"m", Kind::uint, 256},      {"n", Kind::uint, 4096},
                    {"t", Kind::uint, 256},        {"trials", Kind::uint, 200}, {"bias_c", Kind::real, 0.5}};
        case Command::scaling:
            return {{"k", Kind::uint, 16},
                    {"t_values", Kind::uint_list, json::array({64, 128, 256, 512, 1024})},
                    {"m", Kind::uint, 256},
                    {"n", Kind::uint, 4096},
                    {"trials", Kind::uint, 200},
                    {"bias_c", Kind::real, 0.5},
                    {"value_mode", Kind::string, "binary"}};
        case Command::lemmas:
            return {{"sample_scale", Kind::real, 1.0}};
        case Command::diag:
            return {{"weights", Kind::string, ""},     {"csv", Kind::string, ""},
                    {"rows", Kind::uint, 512},         {"cols", Kind::uint, 512},
                    {"bins", Kind::uint, 50},          {"bias_length", Kind::uint, 512},
                    {"bias_noise", Kind::real, 0.1}};
        case Command::support:
            return {{"widths", Kind::uint_list, json::array({2048, 512, 128})},
                    {"top_sparsity", Kind::uint, 4},
                    {"trials", Kind::uint, 1000},
                    {"resample_net_every", Kind::uint, 0},
                    {"calibration_trials", Kind::uint, 500},
                    {"value_mode", Kind::string, "binary"},
                    {"weights", Kind::string, ""}};
        case Command::twolayer:
            return {{"q", Kind::uint, 5},
                    {"k_values", Kind::uint_list, json::array({50, 100, 200, 400})},
                    {"t_factor", Kind::uint, 4},
                    {"p", Kind::uint, 64},
                    {"m", Kind::uint, 1024},
                    {"n", Kind::uint, 4096},
                    {"trials", Kind::uint, 400},
                    {"bias_c_h", Kind::real, 0.125},
                    {"bias_c_g", Kind::real, 0.0}};
        case Command::train:
            return {{"data", Kind::string, "blobs"},
                    {"n_per_class", Kind::uint, 200},
                    {"val_per_class", Kind::uint, 100},
                    {"n_classes", Kind::uint, 3},
                    {"dim", Kind::uint, 8},
                    {"spread", Kind::real, 0.5},
                    {"csv", Kind::string, ""},
                    {"val_csv", Kind::string, ""},
                    {"idx_images", Kind::string, ""},
                    {"idx_labels", Kind::string, ""},
                    {"val_idx_images", Kind::string, ""},
                    {"val_idx_labels", Kind::string, ""},
                    {"val_fraction", Kind::real, 0.2},
                    {"hidden", Kind::uint_list, json::array({256, 256})},
                    {"learning_rate", Kind::real, 0.05},
                    {"shadow_weight", Kind::real, 0.5},
                    {"reg_lambdas", Kind::real_list, json::array()},
                    {"masked_regularizer", Kind::boolean, false},
                    {"dropout_ratio", Kind::real, 0.0},
                    {"batch_size", Kind::uint, 50},
                    {"epochs", Kind::uint, 20},
                    {"source_layer", Kind::string, "h2"},
                    {"sampling", Kind::boolean, false},
                    {"sampling_keep", Kind::real, 0.5},
                    {"smoothing", Kind::boolean, false},
                    {"image_shape", Kind::shape_or_null, nullptr}};
    }
    return {};
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::uint: return "a nonnegative integer";
        case Kind::real: return "a number";
        case Kind::boolean: return "a boolean";
        case Kind::string: return "a string";
        case Kind::uint_list: return "an array of nonnegative integers";
        case Kind::real_list: return "an array of numbers";
        case Kind::shape_or_null: return "null or {width, height, channels}";
    }
    return "?";
}

bool is_uint(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

json normalize(const std::string& key, Kind kind, const json& v) {
    auto fail = [&] { throw ConfigError(key, std::string("expected ") + kind_name(kind)); };
    switch (kind) {
        case Kind::uint:
            if (!is_uint(v)) fail();
            return v.get<std::uint64_t>();
        case Kind::real:
            if (!v.is_number()) fail();
            return v.get<double>();
        case Kind::boolean:
            if (!v.is_boolean()) fail();
            return v;
        case Kind::string:
            if (!v.is_string()) fail();
            return v;
        case Kind::uint_list: {
            if (!v.is_array()) fail();
            json out = json::array();
            for (const json& e : v) {
                if (!is_uint(e)) fail();
                out.push_back(e.get<std::uint64_t>());
            }
            return out;
        }
        case Kind::real_list: {
            if (!v.is_array()) fail();
            json out = json::array();
            for (const json& e : v) {
                if (!e.is_number()) fail();
                out.push_back(e.get<double>());
            }
            return out;
        }
        case Kind::shape_or_null: {
            if (v.is_null()) return v;
            if (!v.is_object()) fail();
            json out = json::object();
            for (const char* field : {"width", "height", "channels"}) {
                if (!v.contains(field)) throw ConfigError(key + "." + field, "missing required key");
                if (!is_uint(v[field])) throw ConfigError(key + "." + field, "expected a nonnegative integer");
                out[field] = v[field].get<std::uint64_t>();
            }
            for (const auto& [k, _] : v.items()) {
                if (!out.contains(k)) throw ConfigError(key + "." + k, "unknown key");
            }
            return out;
        }
    }
    return v;
}

void require_nonempty(const json& params, const char* key, const char* when) {
    if (params[key].get<std::string>().empty()) throw ConfigError(key, std::string("missing required key (") + when + ")");
}

void validate_params(Command c, const json& p) {
    if (c == Command::train) {
        const std::string data = p["data"];
        if (data == "csv") {
            require_nonempty(p, "csv", "data is csv");
        } else if (data == "idx") {
            require_nonempty(p, "idx_images", "data is idx");
            require_nonempty(p, "idx_labels", "data is idx");
        } else if (data != "blobs") {
            throw ConfigError("data", "expected one of blobs, csv, idx");
        }
        if (p["hidden"].size() != 2) throw ConfigError("hidden", "expected two hidden widths");
        const std::string source = p["source_layer"];
        if (source != "h2" && source != "h3") throw ConfigError("source_layer", "expected h2 or h3");
        if (p["smoothing"].get<bool>() && p["image_shape"].is_null()) {
            throw ConfigError("image_shape", "missing required key (smoothing is on)");
        }
    }
    auto check_enum = [&](const char* key, auto&& convert) {
        if (!p.contains(key)) return;
        try {
            convert(p[key].get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, e.what());
        }
    };
    check_enum("value_mode", value_mode_from_string);
    check_enum("mode", dropout_mode_from_string);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t u(const json& v) { return v.get<std::size_t>(); }

std::vector<std::size_t> ulist(const json& v) { return v.get<std::vector<std::size_t>>(); }

RngSeed root_seed(const RunConfig& cfg) { return RngSeed{cfg.seed, 0}; }

std::string fmt(const char* pattern, double a, double b) {
    char buf[200];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

Check make_check(int criterion, std::string name, bool pass, std::string detail) {
    return {criterion, std::move(name), pass, std::move(detail)};
}

Report run_gen(const RunConfig& cfg) {
    const json& p = cfg.params;
    Report r;
    std::vector<std::size_t> widths = ulist(p["widths"]);
    std::vector<std::size_t> sparsities = ulist(p["sparsities"]);
    if (widths.size() < 2) throw ConfigError("widths", "need at least two widths");
    if (sparsities.empty()) {
        sparsities = widths;
        sparsities.back() = u(p["top_sparsity"]);
    }
    const DropoutMode mode = dropout_mode_from_string(p["mode"].get<std::string>());
    const ValueMode value_mode = value_mode_from_string(p["value_mode"].get<std::string>());
    const RngSeed seed = root_seed(cfg);
    const ShadowNet net = ShadowNet::random(widths, sparsities, mode, derive_seed(seed, 0));
    const HiddenSpec top{widths.back(), sparsities.back(), value_mode};

    const std::size_t n = u(p["samples"]);
    Matrix xs(n, widths.front()), hs(n, widths.back());
    Table t{"samples", {"sample", "layer", "nonzeros", "norm"}, {}};
    for (std::size_t s = 0; s < n; ++s) {
        const HiddenVector h = sample_hidden(top, derive_seed(derive_seed(seed, 1), s));
        const DeepSample d = generate_deep(net, h.vec, derive_seed(derive_seed(seed, 2), s));
        std::copy(d.layers.front().begin(), d.layers.front().end(), xs.row(s).begin());
        std::copy(h.vec.begin(), h.vec.end(), hs.row(s).begin());
        for (std::size_t j = 0; j < d.layers.size(); ++j) {
            const auto nz = std::count_if(d.layers[j].begin(), d.layers[j].end(), [](double v) { return v != 0.0; });
            t.rows.push_back({s, j, nz, norm2(d.layers[j])});
        }
    }
    std::filesystem::create_directories(cfg.output_dir);
    save_weights(net.weights, cfg.output_dir / "net.shdw");
    save_weights({xs, hs}, cfg.output_dir / "samples.shdw");
    r.aggregates["depth"] = net.depth();
    r.aggregates["total_nodes"] = net.total_nodes();
    r.aggregates["sparsities"] = sparsities;
    r.tables.push_back(std::move(t));
    return r;
}

Report run_invert(const RunConfig& cfg) {
    const json& p = cfg.params;
    DropoutParams dp;
    dp.k = u(p["k"]);
    dp.m = u(p["m"]);
    dp.n = u(p["n"]);
    dp.t = u(p["t"]);
    dp.trials = u(p["trials"]);
    dp.bias_c = p["bias_c"];
    const DropoutResult res = dropout_experiment(dp, root_seed(cfg), cfg.threads);
    Report r;
    Table t{"trials", {"trial", "clean_error", "dropped_error"}, {}};
    for (std::size_t i = 0; i < res.clean_errors.size(); ++i) {
        t.rows.push_back({i, res.clean_errors[i], res.dropped_errors[i]});
    }
    r.tables.push_back(std::move(t));
    r.aggregates["clean_median"] = res.clean_median;
    r.aggregates["dropped_median"] = res.dropped_median;
    r.aggregates["ratio"] = res.ratio;
    r.checks.push_back(make_check(4, "dropped median <= 2 x clean median", res.ratio <= 2.0,
                                  fmt("ratio %.4g (clean %.4g)", res.ratio, res.clean_median)));
    return r;
}

Report run_scaling(const RunConfig& cfg) {
    const json& p = cfg.params;
    ScalingParams sp;
    sp.k = u(p["k"]);
    sp.t_values = ulist(p["t_values"]);
    sp.m = u(p["m"]);
    sp.n = u(p["n"]);
    sp.trials_per_t = u(p["trials"]);
    sp.bias_c = p["bias_c"];
    sp.value_mode = value_mode_from_string(p["value_mode"].get<std::string>());
    const ScalingResult res = scaling_experiment(sp, root_seed(cfg), cfg.threads);
    Report r;
    Table t{"points", {"t", "mean_error", "std_error"}, {}};
    for (const ScalingPoint& pt : res.points) t.rows.push_back({pt.t, pt.mean_error, pt.std_error});
    r.tables.push_back(std::move(t));
    r.aggregates["slope"] = res.fit.slope;
    r.aggregates["intercept"] = res.fit.intercept;
    r.aggregates["r_squared"] = res.fit.r_squared;
    const bool pass = res.fit.slope >= -1.25 && res.fit.slope <= -0.75 && res.fit.r_squared >= 0.95;
    r.checks.push_back(make_check(3, "log-log slope in [-1.25, -0.75] with r^2 >= 0.95", pass,
                                  fmt("slope %.4g, r^2 %.4g", res.fit.slope, res.fit.r_squared)));
    return r;
}

Report run_lemmas(const RunConfig& cfg) {
    const std::vector<LemmaCheck> checks =
        run_lemma_suite(root_seed(cfg), cfg.threads, cfg.params["sample_scale"].get<double>());
    Report r;
    Table t{"lemmas", {"name", "criterion", "estimate", "bound", "pass"}, {}};
    std::size_t passed = 0;
    for (const LemmaCheck& c : checks) {
        t.rows.push_back({c.name, c.criterion, c.estimate, c.bound, c.pass});
        r.checks.push_back(make_check(c.criterion, c.name, c.pass, c.detail));
        passed += c.pass;
    }
    r.tables.push_back(std::move(t));
    r.aggregates["passed"] = passed;
    r.aggregates["total"] = checks.size();
    return r;
}

struct NamedMatrix {
    std::string name;
    Matrix m;
};

void diagnose_matrix(const NamedMatrix& nm, std::size_t bins, Report& r, Table& moments, Table& spectrum,
                     Table& hist, double* ks_out = nullptr, double* kurt_out = nullptr) {
    const MomentReport mo = weight_moments(nm.m);
    const SpectrumReport sp = singular_spectrum(nm.m);
    moments.rows.push_back({nm.name, nm.m.rows(), nm.m.cols(), mo.mean, mo.variance, mo.skewness, mo.excess_kurtosis,
                            mo.skewness_z, mo.kurtosis_z, sp.ks_distance});
    for (std::size_t i = 0; i < sp.singular_values.size(); ++i) {
        spectrum.rows.push_back({nm.name, i, sp.singular_values[i], sp.singular_values_scaled[i]});
    }
    const HistogramData h = histogram(nm.m.data(), bins);
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        hist.rows.push_back({nm.name, h.bin_edges[i], h.bin_edges[i + 1], h.counts[i]});
    }
    r.aggregates["ks_" + nm.name] = sp.ks_distance;
    r.aggregates["excess_kurtosis_" + nm.name] = mo.excess_kurtosis;
    if (ks_out) *ks_out = sp.ks_distance;
    if (kurt_out) *kurt_out = mo.excess_kurtosis;
}

void diagnose_bias(const std::string& name, std::span<const double> b, Report& r, Table& bias) {
    const MomentReport mo = weight_moments(b);
    const double ratio = bias_uniformity(b);
    bias.rows.push_back({name, b.size(), mo.mean, std::sqrt(mo.variance), ratio, uniform_like(ratio)});
    r.aggregates["uniformity_" + name] = ratio;
}

Report run_diag(const RunConfig& cfg) {
    const json& p = cfg.params;
    const std::size_t bins = u(p["bins"]);
    Report r;
    Table moments{"moments",
                  {"matrix", "rows", "cols", "mean", "variance", "skewness", "excess_kurtosis", "skewness_z",
                   "kurtosis_z", "ks_distance"},
                  {}};
    Table spectrum{"spectrum", {"matrix", "index", "singular_value", "scaled"}, {}};
    Table hist{"histogram", {"matrix", "bin_lo", "bin_hi", "count"}, {}};
    Table bias{"bias", {"name", "length", "mean", "std", "ratio", "uniform_like"}, {}};

    const std::string weights = p["weights"], csv = p["csv"];
    if (weights.empty() && csv.empty()) {
        const RngSeed seed = root_seed(cfg);
        const NamedMatrix gauss{"gaussian", gaussian_matrix(u(p["rows"]), u(p["cols"]), derive_seed(seed, 0))};
        const NamedMatrix ident{"identity", Matrix::identity(std::min(u(p["rows"]), u(p["cols"])))};
        double ks_g = 0, kurt_g = 0, ks_i = 0;
        diagnose_matrix(gauss, bins, r, moments, spectrum, hist, &ks_g, &kurt_g);
        diagnose_matrix(ident, bins, r, moments, spectrum, hist, &ks_i);
        Vector b(u(p["bias_length"]));
        Rng rng(derive_seed(seed, 1));
        const double noise = p["bias_noise"];
        for (double& v : b) v = 1.0 + noise * rng.normal();
        diagnose_bias("constant_plus_noise", b, r, bias);
        const double ratio = bias_uniformity(b);
        r.checks.push_back(make_check(7, "gaussian KS <= 0.05", ks_g <= 0.05, fmt("ks %.4g", ks_g, 0)));
        r.checks.push_back(make_check(7, "gaussian |excess kurtosis| <= 0.05", std::abs(kurt_g) <= 0.05,
                                      fmt("excess kurtosis %.4g", kurt_g, 0)));
        r.checks.push_back(make_check(7, "identity KS >= 0.5", ks_i >= 0.5, fmt("ks %.4g", ks_i, 0)));
        r.checks.push_back(make_check(7, "bias uniformity ratio >= 5", ratio >= kUniformityThreshold,
                                      fmt("ratio %.4g", ratio, 0)));
    } else {
        std::vector<NamedMatrix> inputs;
        if (!weights.empty()) {
            const auto ms = load_weights(weights);
            for (std::size_t i = 0; i < ms.size(); ++i) inputs.push_back({"m" + std::to_string(i), ms[i]});
        }
        if (!csv.empty()) inputs.push_back({"csv", load_matrix_csv(csv)});
        for (const NamedMatrix& nm : inputs) {
            if (nm.m.rows() == 1) {
                diagnose_bias(nm.name, nm.m.data(), r, bias);
            } else {
                diagnose_matrix(nm, bins, r, moments, spectrum, hist);
            }
        }
    }
    for (Table* t : {&moments, &spectrum, &hist, &bias}) r.tables.push_back(std::move(*t));
    return r;
}

Report run_support(const RunConfig& cfg) {
    const json& p = cfg.params;
    SupportParams sp;
    sp.widths = ulist(p["widths"]);
    sp.top_sparsity = u(p["top_sparsity"]);
    sp.n_trials = u(p["trials"]);
    sp.resample_net_every = u(p["resample_net_every"]);
    sp.calibration_trials = u(p["calibration_trials"]);
    sp.value_mode = value_mode_from_string(p["value_mode"].get<std::string>());
    SupportResult res;
    const std::string weights = p["weights"];
    if (weights.empty()) {
        res = support_recovery_experiment(sp, root_seed(cfg), cfg.threads);
    } else {
        std::vector<Matrix> ws = load_weights(weights);
        std::vector<std::size_t> sparsities;
        for (const Matrix& w : ws) sparsities.push_back(w.rows());
        if (!ws.empty()) sparsities.push_back(sp.top_sparsity);
        const ShadowNet net = ShadowNet::from_weights(std::move(ws), sparsities, DropoutMode::fixed_subset);
        res = support_recovery_experiment(net, sp, root_seed(cfg), cfg.threads);
    }
    Report r;
    Table t{"trials", {"trial", "precision", "recall", "exact"}, {}};
    for (std::size_t i = 0; i < res.per_trial.size(); ++i) {
        t.rows.push_back({i, res.per_trial[i].precision, res.per_trial[i].recall, res.per_trial[i].exact});
    }
    r.tables.push_back(std::move(t));
    Table cal{"calibration", {"net", "layer", "c"}, {}};
    for (std::size_t i = 0; i < res.calibrations.size(); ++i) {
        for (std::size_t j = 0; j < res.calibrations[i].c.size(); ++j) {
            cal.rows.push_back({i, j + 1, res.calibrations[i].c[j]});
        }
    }
    r.tables.push_back(std::move(cal));
    r.aggregates["successes"] = res.successes;
    r.aggregates["n_trials"] = res.n_trials;
    r.aggregates["success_rate"] = static_cast<double>(res.successes) / static_cast<double>(res.n_trials);
    r.aggregates["mean_precision"] = res.mean_precision;
    r.aggregates["mean_recall"] = res.mean_recall;
    const bool pass = res.successes * 1000 >= 990 * res.n_trials;
    r.checks.push_back(make_check(1, "exact top-support recovery >= 99%", pass,
                                  fmt("%.0f of %.0f trials", static_cast<double>(res.successes),
                                      static_cast<double>(res.n_trials))));
    return r;
}

Report run_twolayer(const RunConfig& cfg) {
    const json& p = cfg.params;
    const std::vector<std::size_t> ks = ulist(p["k_values"]);
    if (ks.size() < 3) throw ConfigError("k_values", "need at least three values");
    std::vector<double> kx, err, se;
    Report r;
    Table t{"points", {"k", "t", "mean_error", "std_error"}, {}};
    for (std::size_t k : ks) {
        TwoLayerParams tp;
        tp.q = u(p["q"]);
        tp.k = k;
        tp.t = u(p["t_factor"]) * k;
        tp.p = u(p["p"]);
        tp.m = u(p["m"]);
        tp.n = u(p["n"]);
        tp.bias_c_h = p["bias_c_h"];
        tp.bias_c_g = p["bias_c_g"];
        const TwoLayerResult res = two_layer_experiment(tp, u(p["trials"]), root_seed(cfg), cfg.threads);
        for (const std::string& w : res.warnings) r.aggregates["warnings"].push_back(w);
        kx.push_back(static_cast<double>(k));
        err.push_back(res.error.mean);
        se.push_back(res.error.std_error);
        t.rows.push_back({k, tp.t, res.error.mean, res.error.std_error});
    }
    r.tables.push_back(std::move(t));
    bool decreasing = true, strict = true;
    for (std::size_t i = 1; i < err.size(); ++i) {
        decreasing = decreasing && err[i] < err[i - 1] + 3.0 * std::hypot(se[i], se[i - 1]);
        strict = strict && err[i] < err[i - 1];
    }
    const SlopeFit fit = fit_power_law(kx, err);
    r.aggregates["slope"] = fit.slope;
    r.aggregates["r_squared"] = fit.r_squared;
    r.aggregates["strictly_decreasing_means"] = strict;
    r.checks.push_back(make_check(5, "error decreasing in k (3 se slack)", decreasing,
                                  fmt("first %.4g, last %.4g", err.front(), err.back())));
    r.checks.push_back(make_check(5, "slope vs k in [-1.4, -0.6]", fit.slope >= -1.4 && fit.slope <= -0.6,
                                  fmt("slope %.4g, r^2 %.4g", fit.slope, fit.r_squared)));
    return r;
}

std::pair<Dataset, Dataset> split_tail(Dataset d, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("val_fraction", "expected a value in (0, 1)");
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * d.size()));
    if (n_val >= d.size()) throw std::invalid_argument("dataset too small to split off a validation set");
    Dataset val;
    val.n_classes = d.n_classes;
    val.inputs.assign(d.inputs.end() - n_val, d.inputs.end());
    val.labels.assign(d.labels.end() - n_val, d.labels.end());
    d.inputs.resize(d.size() - n_val);
    d.labels.resize(d.labels.size() - n_val);
    return {std::move(d), std::move(val)};
}

std::pair<Dataset, Dataset> load_training_data(const json& p, RngSeed seed) {
    const std::string data = p["data"];
    if (data == "blobs") {
        const std::size_t c = u(p["n_classes"]), dim = u(p["dim"]);
        const double spread = p["spread"];
        return {gen_blobs(u(p["n_per_class"]), c, dim, spread, derive_seed(seed, 0)),
                gen_blobs(u(p["val_per_class"]), c, dim, spread, derive_seed(seed, 1))};
    }
    const double frac = p["val_fraction"];
    std::pair<Dataset, Dataset> out;
    if (data == "csv") {
        const std::string val = p["val_csv"];
        out = val.empty() ? split_tail(load_csv(p["csv"].get<std::string>()), frac)
                          : std::pair{load_csv(p["csv"].get<std::string>()), load_csv(val)};
    } else {
        const std::string vi = p["val_idx_images"], vl = p["val_idx_labels"];
        Dataset train = load_idx(p["idx_images"].get<std::string>(), p["idx_labels"].get<std::string>());
        out = vi.empty() ? split_tail(std::move(train), frac) : std::pair{std::move(train), load_idx(vi, vl)};
    }
    const std::size_t c = std::max(out.first.n_classes, out.second.n_classes);
    out.first.n_classes = out.second.n_classes = std::max<std::size_t>(c, 2);
    return out;
}

Report run_train(const RunConfig& cfg) {
    const json& p = cfg.params;
    const RngSeed seed = root_seed(cfg);
    const auto [train, val] = load_training_data(p, derive_seed(seed, 0));
    train.validate();
    val.validate();
    if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (train.dim() != val.dim()) throw std::invalid_argument("train: train and validation dimensions differ");

    TrainConfig tc;
    tc.learning_rate = p["learning_rate"];
    tc.shadow_weight = p["shadow_weight"];
    tc.reg_lambdas = p["reg_lambdas"].get<std::vector<double>>();
    tc.masked_regularizer = p["masked_regularizer"];
    tc.dropout_ratio = p["dropout_ratio"];
    tc.batch_size = u(p["batch_size"]);
    tc.epochs = 1;
    tc.synth.source_layer = p["source_layer"] == "h3" ? SourceLayer::h3 : SourceLayer::h2;
    tc.synth.sampling = p["sampling"];
    tc.synth.sampling_keep = p["sampling_keep"];
    tc.synth.smoothing = p["smoothing"];
    if (!p["image_shape"].is_null()) {
        const json& s = p["image_shape"];
        tc.synth.image_shape = ImageShape{u(s["width"]), u(s["height"]), u(s["channels"])};
    }
    tc.validate();

    const auto hidden = ulist(p["hidden"]);
    MlpParams params = MlpParams::init(train.dim(), hidden[0], hidden[1], train.n_classes, derive_seed(seed, 2));

    Report r;
    // Gradient check on the first kink-free training samples.
    const std::size_t stride = std::max<std::size_t>(1, (params.w2.size() + 1023) / 1024);
    std::size_t checked = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < train.size() && checked < 3; ++i) {
        const GradCheck g = check_gradients(params, train.inputs[i], train.labels[i], 1e-5, stride);
        if (!g.kink_free) continue;
        worst = std::max(worst, g.max_rel_error);
        ++checked;
    }
    r.aggregates["gradient_check_max_rel_error"] = worst;
    r.aggregates["gradient_check_points"] = checked;
    r.checks.push_back(make_check(8, "gradient check <= 1e-4 relative", checked > 0 && worst <= 1e-4,
                                  fmt("max relative error %.3g over %.0f points", worst, static_cast<double>(checked))));

    Table t{"epochs", {"epoch", "train_loss", "val_loss", "real_error", "synthetic_error", "agreement"}, {}};
    const EvalMetrics initial = evaluate(params, val, tc.synth, derive_seed(seed, 3));
    t.rows.push_back({0, nullptr, initial.loss, initial.real_error, initial.synthetic_error, initial.agreement});
    double max_gap = std::abs(initial.synthetic_error - initial.real_error);
    EvalMetrics last = initial;
    const RngSeed epochs = derive_seed(seed, 4);
    for (std::size_t e = 1; e <= u(p["epochs"]); ++e) {
        TrainResult res = train_epoch(std::move(params), train, tc, derive_seed(epochs, e), &val);
        params = std::move(res.params);
        last = *res.metrics.validation;
        max_gap = std::max(max_gap, std::abs(last.synthetic_error - last.real_error));
        t.rows.push_back({e, res.metrics.train_loss, last.loss, last.real_error, last.synthetic_error, last.agreement});
    }
    r.tables.push_back(std::move(t));
    std::filesystem::create_directories(cfg.output_dir);
    save_weights(to_matrices(params), cfg.output_dir / "params.shdw");

    const double chance = 1.0 / static_cast<double>(train.n_classes);
    r.aggregates["initial_error"] = initial.real_error;
    r.aggregates["final_error"] = last.real_error;
    r.aggregates["final_synthetic_error"] = last.synthetic_error;
    r.aggregates["final_agreement"] = last.agreement;
    r.aggregates["max_synthetic_gap"] = max_gap;
    r.checks.push_back(make_check(8, "final validation error <= epoch-0 error", last.real_error <= initial.real_error,
                                  fmt("epoch 0 %.4g, final %.4g", initial.real_error, last.real_error)));
    r.checks.push_back(make_check(8, "synthetic error within 0.15 of real error at every epoch", max_gap <= 0.15,
                                  fmt("max gap %.4g", max_gap, 0)));
    r.checks.push_back(make_check(8, "real/synthetic label agreement >= chance + 0.2", last.agreement >= chance + 0.2,
                                  fmt("agreement %.4g, chance %.4g", last.agreement, chance)));
    return r;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (buf.size() - pos < n) throw FormatError(std::string("truncated ") + what, pos);
    }
    std::uint64_t get(std::size_t width, const char* what) {
        need(width, what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += width;
        return v;
    }
};

std::string csv_cell(const json& v) {
    if (v.is_null()) return "";
    if (v.is_string()) {
        std::string s = "\"";
        for (char ch : v.get<std::string>()) {
            if (ch == '"') s.push_back('"');
            s.push_back(ch);
        }
        return s + "\"";
    }
    return v.dump();
}

}  // namespace

std::string_view to_string(Command c) {
    switch (c) {
        case Command::gen: return "gen";
        case Command::invert: return "invert";
        case Command::scaling: return "scaling";
        case Command::lemmas: return "lemmas";
        case Command::diag: return "diag";
        case Command::support: return "support";
        case Command::twolayer: return "twolayer";
        case Command::train: return "train";
    }
    return "?";
}

Command command_from_string(std::string_view s) {
    for (Command c : kCommands) {
        if (to_string(c) == s) return c;
    }
    throw std::invalid_argument("unknown command '" + std::string(s) + "'");
}

const std::vector<Command>& all_commands() {
    static const std::vector<Command> all(std::begin(kCommands), std::end(kCommands));
    return all;
}

RunConfig parse_config(Command command, std::string_view json_text, const CliOverrides& overrides) {
    json doc;
    if (json_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        doc = json::object();
    } else {
        try {
            doc = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw ConfigError("<document>", e.what());
        }
    }
    if (!doc.is_object()) throw ConfigError("<document>", "expected a JSON object");

    RunConfig cfg;
    cfg.command = command;
    const std::vector<Key> keys = schema(command);
    for (const auto& [key, value] : doc.items()) {
        if (key == "seed") {
            cfg.seed = normalize(key, Kind::uint, value).get<std::uint64_t>();
        } else if (key == "threads") {
            cfg.threads = static_cast<unsigned>(normalize(key, Kind::uint, value).get<std::uint64_t>());
        } else if (key == "out") {
            cfg.output_dir = normalize(key, Kind::string, value).get<std::string>();
        } else if (key == "command") {
            if (!value.is_string()) throw ConfigError(key, "expected a string");
            if (value.get<std::string>() != to_string(command)) {
                throw ConfigError(key, "file is for '" + value.get<std::string>() + "', not '" +
                                           std::string(to_string(command)) + "'");
            }
        } else {
            const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return key == k.name; });
            if (it == keys.end()) throw ConfigError(key, "unknown key for command " + std::string(to_string(command)));
            cfg.params[key] = normalize(key, it->kind, value);
        }
    }
    for (const Key& k : keys) {
        if (!cfg.params.contains(k.name)) cfg.params[k.name] = normalize(k.name, k.kind, k.fallback);
    }
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.threads) cfg.threads = *overrides.threads;
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    validate_params(command, cfg.params);
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    json doc = cfg.params;
    doc["command"] = std::string(to_string(cfg.command));
    doc["seed"] = cfg.seed;
    doc["threads"] = cfg.threads;
    doc["out"] = cfg.output_dir.string();
    return doc.dump(2);
}

json Report::to_json() const {
    json doc;
    doc["command"] = std::string(to_string(command));
    doc["config"] = config;
    doc["version"] = version;
    doc["aggregates"] = aggregates;
    doc["duration_seconds"] = duration_seconds;
    doc["all_pass"] = all_pass();
    doc["tables"] = json::object();
    for (const Table& t : tables) {
        json rows = json::array();
        for (const auto& row : t.rows) rows.push_back(row);
        doc["tables"][t.name] = {{"columns", t.columns}, {"rows", rows}};
    }
    doc["checks"] = json::array();
    for (const Check& c : checks) {
        doc["checks"].push_back({{"criterion", c.criterion}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    return doc;
}

bool Report::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

int Report::exit_code() const {
    for (const Check& c : checks) {
        if (!c.pass) return c.criterion > 0 ? c.criterion : 1;
    }
    return 0;
}

Report run_command(const RunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    Report r;
    try {
        switch (cfg.command) {
            case Command::gen: r = run_gen(cfg); break;
            case Command::invert: r = run_invert(cfg); break;
            case Command::scaling: r = run_scaling(cfg); break;
            case Command::lemmas: r = run_lemmas(cfg); break;
            case Command::diag: r = run_diag(cfg); break;
            case Command::support: r = run_support(cfg); break;
            case Command::twolayer: r = run_twolayer(cfg); break;
            case Command::train: r = run_train(cfg); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(to_string(cfg.command)) + ": " + e.what());
    }
    r.command = cfg.command;
    r.config = json::parse(serialize_config(cfg));
    r.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_report(r, cfg.output_dir);
    return r;
}

void save_weights(const std::vector<Matrix>& matrices, const std::filesystem::path& path) {
    std::string out = "SHDW";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(matrices.size()));
    for (const Matrix& m : matrices) {
        put_u64(out, m.rows());
        put_u64(out, m.cols());
        for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size()))) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

std::vector<Matrix> load_weights(const std::filesystem::path& path) {
    const std::string buf = read_text(path);
    Reader rd{buf};
    rd.need(4, "magic");
    if (buf.compare(0, 4, "SHDW") != 0) throw FormatError("bad magic in " + path.string(), 0);
    rd.pos = 4;
    const auto version = rd.get(4, "version");
    if (version != 1) throw FormatError("unsupported version " + std::to_string(version), 4);
    const auto count = rd.get(4, "matrix count");
    std::vector<Matrix> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t at = rd.pos;
        const auto rows = rd.get(8, "rows");
        const auto cols = rd.get(8, "cols");
        if (cols != 0 && rows > (buf.size() - rd.pos) / 8 / cols) throw FormatError("truncated matrix data", at);
        std::vector<double> data(rows * cols);
        for (double& v : data) v = std::bit_cast<double>(rd.get(8, "matrix data"));
        out.emplace_back(rows, cols, std::move(data));
    }
    if (rd.pos != buf.size()) throw FormatError("trailing bytes", rd.pos);
    return out;
}

std::vector<Matrix> to_matrices(const MlpParams& params) {
    auto row = [](const Vector& b) { return Matrix(1, b.size(), b); };
    return {params.w1, row(params.b1), params.w2, row(params.b2), params.w3, row(params.b3)};
}

MlpParams mlp_from_matrices(const std::vector<Matrix>& m) {
    if (m.size() != 6) throw std::invalid_argument("mlp_from_matrices: expected 6 matrices, got " + std::to_string(m.size()));
    for (std::size_t i : {1, 3, 5}) {
        if (m[i].rows() != 1) throw std::invalid_argument("mlp_from_matrices: bias " + std::to_string(i) + " is not 1 x n");
    }
    auto vec = [](const Matrix& b) { return Vector(b.data().begin(), b.data().end()); };
    MlpParams p{m[0], m[2], m[4], vec(m[1]), vec(m[3]), vec(m[5])};
    p.validate();
    return p;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + output_dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> paths;
    auto write = [&](const std::filesystem::path& path, const std::string& text) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size()))) {
            throw std::runtime_error("cannot write " + path.string());
        }
        paths.push_back(path);
    };
    write(output_dir / "report.json", report.to_json().dump(2) + "\n");
    for (const Table& t : report.tables) {
        if (t.rows.empty()) continue;
        std::string text;
        for (std::size_t i = 0; i < t.columns.size(); ++i) text += (i ? "," : "") + t.columns[i];
        text += "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + csv_cell(row[i]);
            text += "\n";
        }
        write(output_dir / (t.name + ".csv"), text);
    }
    return paths;
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    std::vector<double> data;
    std::size_t rows = 0, cols = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::size_t end = eol;
        if (end > pos && text[end - 1] == '\r') --end;
        if (end > pos) {
            std::size_t n = 0, start = pos;
            while (start <= end) {
                std::size_t comma = text.find(',', start);
                if (comma == std::string::npos || comma > end) comma = end;
                const std::string field = text.substr(start, comma - start);
                char* stop = nullptr;
                const double v = std::strtod(field.c_str(), &stop);
                if (field.empty() || stop != field.c_str() + field.size()) {
                    throw ParseError("bad number '" + field + "' in " + path.string(), start);
                }
                data.push_back(v);
                ++n;
                start = comma + 1;
            }
            if (rows == 0) cols = n;
            if (n != cols) throw ParseError("row has " + std::to_string(n) + " fields, expected " + std::to_string(cols), pos);
            ++rows;
        }
        pos = eol + 1;
    }
    if (rows == 0) throw ParseError("empty matrix file " + path.string(), 0);
    return Matrix(rows, cols, std::move(data));
}

}  // namespace shadownet
