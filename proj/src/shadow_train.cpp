#include "shadownet/shadow_train.hpp"

#include "shadownet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

namespace shadownet {

namespace {

void axpy_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i] * s;
        if (ai == 0.0) continue;
        auto row = m.row(i);
        for (std::size_t j = 0; j < b.size(); ++j) row[j] += ai * b[j];
    }
}

void add_into(std::span<double> dst, std::span<const double> src, double s) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

void check_mask(const Vector& m, std::size_t n, const char* which) {
    if (m.size() != n) {
        throw std::invalid_argument(std::string("dropout mask ") + which + " has length " + std::to_string(m.size()) +
                                    ", expected " + std::to_string(n));
    }
}

}  // namespace

MlpParams MlpParams::init(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2, std::size_t classes,
                          RngSeed seed) {
    if (input_dim == 0 || hidden1 == 0 || hidden2 == 0 || classes < 2) {
        throw std::invalid_argument("MlpParams::init: widths must be positive and classes >= 2");
    }
    MlpParams p;
    p.w1 = gaussian_matrix(input_dim, hidden1, derive_seed(seed, 0));
    p.w2 = gaussian_matrix(hidden1, hidden2, derive_seed(seed, 1));
    p.w3 = gaussian_matrix(hidden2, classes, derive_seed(seed, 2));
    p.w1 *= std::sqrt(2.0 / static_cast<double>(input_dim));
    p.w2 *= std::sqrt(2.0 / static_cast<double>(hidden1));
    p.w3 *= std::sqrt(2.0 / static_cast<double>(hidden2));
    p.b1.assign(hidden1, 0.0);
    p.b2.assign(hidden2, 0.0);
    p.b3.assign(classes, 0.0);
    return p;
}

void MlpParams::validate() const {
    if (w1.cols() != w2.rows() || w2.cols() != w3.rows() || b1.size() != w1.cols() || b2.size() != w2.cols() ||
        b3.size() != w3.cols() || w1.empty() || w3.empty()) {
        throw std::invalid_argument("MlpParams: inconsistent layer shapes");
    }
}

Activations mlp_forward(const MlpParams& params, std::span<const double> x, const DropoutMasks* masks) {
    params.validate();
    if (x.size() != params.input_dim()) {
        throw std::invalid_argument("mlp_forward: input has length " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(params.input_dim()));
    }
    if (masks) {
        check_mask(masks->m1, params.b1.size(), "m1");
        check_mask(masks->m2, params.b2.size(), "m2");
    }
    Activations a;
    a.pre1 = matvec_t(params.w1, x);
    add_into(a.pre1, params.b1, 1.0);
    a.h1 = relu(a.pre1);
    if (masks) {
        for (std::size_t i = 0; i < a.h1.size(); ++i) a.h1[i] *= masks->m1[i];
    }
    a.pre2 = matvec_t(params.w2, a.h1);
    add_into(a.pre2, params.b2, 1.0);
    a.h2 = relu(a.pre2);
    if (masks) {
        for (std::size_t i = 0; i < a.h2.size(); ++i) a.h2[i] *= masks->m2[i];
    }
    a.logits = matvec_t(params.w3, a.h2);
    add_into(a.logits, params.b3, 1.0);
    return a;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
    return {Matrix(p.w1.rows(), p.w1.cols()), Matrix(p.w2.rows(), p.w2.cols()), Matrix(p.w3.rows(), p.w3.cols()),
            Vector(p.b1.size(), 0.0), Vector(p.b2.size(), 0.0), Vector(p.b3.size(), 0.0)};
}

void MlpGrads::add_scaled(const MlpGrads& o, double s) {
    add_into(w1.data(), o.w1.data(), s);
    add_into(w2.data(), o.w2.data(), s);
    add_into(w3.data(), o.w3.data(), s);
    add_into(b1, o.b1, s);
    add_into(b2, o.b2, s);
    add_into(b3, o.b3, s);
}

double MlpGrads::squared_norm() const {
    return shadownet::squared_norm(w1.data()) + shadownet::squared_norm(w2.data()) +
           shadownet::squared_norm(w3.data()) + shadownet::squared_norm(b1) + shadownet::squared_norm(b2) +
           shadownet::squared_norm(b3);
}

namespace {

Vector softmax(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    Vector p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - mx);
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace

double cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw std::invalid_argument("cross_entropy: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return std::log(sum) + mx - logits[label];
}

std::size_t argmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

std::size_t predict(const MlpParams& params, std::span<const double> x) { return argmax(mlp_forward(params, x).logits); }

MlpGrads mlp_backward(const MlpParams& params, std::span<const double> x, std::size_t label,
                      const DropoutMasks* masks) {
    if (label >= params.n_classes()) {
        throw std::invalid_argument("mlp_backward: label " + std::to_string(label) + " out of range");
    }
    const Activations a = mlp_forward(params, x, masks);
    MlpGrads g = MlpGrads::zeros_like(params);

    Vector dz = softmax(a.logits);
    dz[label] -= 1.0;
    axpy_outer(g.w3, a.h2, dz, 1.0);
    g.b3 = dz;

    Vector d2 = matvec(params.w3, dz);
    for (std::size_t i = 0; i < d2.size(); ++i) {
        d2[i] *= (a.pre2[i] > 0.0 ? 1.0 : 0.0) * (masks ? masks->m2[i] : 1.0);
    }
    axpy_outer(g.w2, a.h1, d2, 1.0);
    g.b2 = d2;

    Vector d1 = matvec(params.w2, d2);
    for (std::size_t i = 0; i < d1.size(); ++i) {
        d1[i] *= (a.pre1[i] > 0.0 ? 1.0 : 0.0) * (masks ? masks->m1[i] : 1.0);
    }
    axpy_outer(g.w1, x, d1, 1.0);
    g.b1 = d1;
    return g;
}

GradCheck check_gradients(const MlpParams& params, std::span<const double> x, std::size_t label, double eps,
                          std::size_t stride) {
    if (stride == 0) throw std::invalid_argument("check_gradients: stride must be positive");
    const Activations a = mlp_forward(params, x);
    GradCheck out;
    out.min_abs_preact = INFINITY;
    for (double v : a.pre1) out.min_abs_preact = std::min(out.min_abs_preact, std::abs(v));
    for (double v : a.pre2) out.min_abs_preact = std::min(out.min_abs_preact, std::abs(v));
    out.kink_free = out.min_abs_preact >= 1e-3;

    const MlpGrads g = mlp_backward(params, x, label);
    MlpParams probe = params;
    auto compare = [&](std::span<double> values, std::span<const double> analytic) {
        for (std::size_t i = 0; i < values.size(); i += stride) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = cross_entropy(mlp_forward(probe, x).logits, label);
            values[i] = saved - eps;
            const double down = cross_entropy(mlp_forward(probe, x).logits, label);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
            out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - numeric) / scale);
        }
    };
    compare(probe.w1.data(), g.w1.data());
    compare(probe.w2.data(), g.w2.data());
    compare(probe.w3.data(), g.w3.data());
    compare(probe.b1, g.b1);
    compare(probe.b2, g.b2);
    compare(probe.b3, g.b3);
    return out;
}

void SynthOptions::validate() const {
    if (!(sampling_keep >= 0.0 && sampling_keep <= 1.0)) {
        throw std::invalid_argument("SynthOptions: sampling_keep must lie in [0, 1]");
    }
    if (smoothing && !image_shape) throw std::invalid_argument("SynthOptions: smoothing requires image_shape");
}

Vector shadow_synthesize(const MlpParams& params, std::span<const double> h_top, const SynthOptions& opts,
                         RngSeed seed) {
    opts.validate();
    params.validate();
    const std::size_t expected = opts.source_layer == SourceLayer::h2 ? params.w2.cols() : params.w3.cols();
    if (h_top.size() != expected) {
        throw std::invalid_argument("shadow_synthesize: source vector has length " + std::to_string(h_top.size()) +
                                    ", expected " + std::to_string(expected));
    }
    std::uint64_t layer = 0;
    auto down = [&](const Matrix& w, std::span<const double> h) {
        Vector out = relu(matvec(w, h));
        if (opts.sampling) {
            const Vector mask = bernoulli_mask(out.size(), opts.sampling_keep, derive_seed(seed, layer));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
        }
        ++layer;
        return out;
    };
    Vector h2;
    if (opts.source_layer == SourceLayer::h3) {
        h2 = down(params.w3, h_top);
        h_top = h2;
    }
    const Vector h1 = down(params.w2, h_top);
    Vector x = down(params.w1, h1);
    if (opts.smoothing) {
        if (opts.image_shape->size() != x.size()) {
            throw std::invalid_argument("shadow_synthesize: image_shape does not match the input dimension");
        }
        x = smooth3x3(x, *opts.image_shape);
    }
    return x;
}

Vector smooth3x3(std::span<const double> img, const ImageShape& shape) {
    if (shape.size() == 0 || img.size() != shape.size()) {
        throw std::invalid_argument("smooth3x3: image has " + std::to_string(img.size()) + " values, shape needs " +
                                    std::to_string(shape.size()));
    }
    const auto w = static_cast<long>(shape.width);
    const auto h = static_cast<long>(shape.height);
    Vector out(img.size());
    for (std::size_t c = 0; c < shape.channels; ++c) {
        const std::size_t base = c * shape.width * shape.height;
        for (long y = 0; y < h; ++y) {
            for (long x = 0; x < w; ++x) {
                double sum = 0.0;
                for (long dy = -1; dy <= 1; ++dy) {
                    const long yy = std::clamp(y + dy, 0L, h - 1);
                    for (long dx = -1; dx <= 1; ++dx) {
                        const long xx = std::clamp(x + dx, 0L, w - 1);
                        sum += img[base + static_cast<std::size_t>(yy * w + xx)];
                    }
                }
                out[base + static_cast<std::size_t>(y * w + x)] = sum / 9.0;
            }
        }
    }
    return out;
}

Matrix regularizer_grad(const Matrix& w, std::span<const double> h, std::span<const double> x, bool masked_variant,
                        const std::vector<std::size_t>* subset) {
    if (h.size() != w.cols() || x.size() != w.rows()) {
        throw std::invalid_argument("regularizer_grad: W is " + std::to_string(w.rows()) + "x" +
                                    std::to_string(w.cols()) + ", h has length " + std::to_string(h.size()) +
                                    ", x has length " + std::to_string(x.size()));
    }
    const Vector pre = matvec(w, h);
    Vector residual(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = pre[i] > 0.0 ? pre[i] : 0.0;
        const double rp = pre[i] > 0.0 ? 1.0 : 0.0;
        residual[i] = masked_variant ? (x[i] - r) * rp : x[i] - r * rp;
    }
    if (subset) {
        Vector keep(x.size(), 0.0);
        for (std::size_t i : *subset) {
            if (i >= x.size()) throw std::invalid_argument("regularizer_grad: subset index out of range");
            keep[i] = 1.0;
        }
        for (std::size_t i = 0; i < x.size(); ++i) residual[i] *= keep[i];
    }
    Matrix g(w.rows(), w.cols());
    axpy_outer(g, residual, h, 1.0);
    return g;
}

void Dataset::validate() const {
    if (inputs.size() != labels.size()) throw std::invalid_argument("Dataset: inputs and labels differ in count");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (labels[i] >= n_classes) throw std::invalid_argument("Dataset: label out of range at sample " + std::to_string(i));
        if (inputs[i].size() != inputs.front().size()) {
            throw std::invalid_argument("Dataset: sample " + std::to_string(i) + " has a different dimension");
        }
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be nonnegative");
    if (!(shadow_weight >= 0.0)) throw std::invalid_argument("TrainConfig: shadow_weight must be nonnegative");
    if (!reg_lambdas.empty() && reg_lambdas.size() != 2) {
        throw std::invalid_argument("TrainConfig: reg_lambdas needs one entry per generative layer (2)");
    }
    for (double l : reg_lambdas) {
        if (!(l >= 0.0)) throw std::invalid_argument("TrainConfig: reg_lambdas must be nonnegative");
    }
    if (!(dropout_ratio >= 0.0 && dropout_ratio < 1.0)) throw std::invalid_argument("TrainConfig: dropout_ratio must lie in [0, 1)");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
    synth.validate();
}

namespace {

std::span<const double> source_of(const Activations& a, SourceLayer s) {
    return s == SourceLayer::h2 ? std::span<const double>(a.h2) : std::span<const double>(a.logits);
}

DropoutMasks draw_masks(const MlpParams& p, double ratio, RngSeed seed) {
    const double keep = 1.0 - ratio;
    DropoutMasks m{bernoulli_mask(p.b1.size(), keep, derive_seed(seed, 0)),
                   bernoulli_mask(p.b2.size(), keep, derive_seed(seed, 1))};
    for (double& v : m.m1) v /= keep;
    for (double& v : m.m2) v /= keep;
    return m;
}

void apply_update(MlpParams& p, const MlpGrads& g, double lr) {
    add_into(p.w1.data(), g.w1.data(), -lr);
    add_into(p.w2.data(), g.w2.data(), -lr);
    add_into(p.w3.data(), g.w3.data(), -lr);
    add_into(p.b1, g.b1, -lr);
    add_into(p.b2, g.b2, -lr);
    add_into(p.b3, g.b3, -lr);
}

}  // namespace

std::vector<Vector> synthesize_dataset(const MlpParams& params, const Dataset& data, const SynthOptions& opts,
                                       RngSeed seed) {
    std::vector<Vector> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Activations a = mlp_forward(params, data.inputs[i]);
        out.push_back(shadow_synthesize(params, source_of(a, opts.source_layer), opts, derive_seed(seed, i)));
    }
    return out;
}

EvalMetrics evaluate(const MlpParams& params, const Dataset& data, const SynthOptions& opts, RngSeed seed) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    EvalMetrics m;
    std::size_t real_wrong = 0, synth_wrong = 0, agree = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Activations a = mlp_forward(params, data.inputs[i]);
        m.loss += cross_entropy(a.logits, data.labels[i]);
        const std::size_t pred = argmax(a.logits);
        const Vector xs = shadow_synthesize(params, source_of(a, opts.source_layer), opts, derive_seed(seed, i));
        const std::size_t pred_s = predict(params, xs);
        real_wrong += pred != data.labels[i];
        synth_wrong += pred_s != data.labels[i];
        agree += pred == pred_s;
    }
    const double n = static_cast<double>(data.size());
    m.loss /= n;
    m.real_error = static_cast<double>(real_wrong) / n;
    m.synthetic_error = static_cast<double>(synth_wrong) / n;
    m.agreement = static_cast<double>(agree) / n;
    return m;
}

TrainResult train_epoch(MlpParams params, const Dataset& data, const TrainConfig& cfg, RngSeed seed,
                        const Dataset* validation) {
    cfg.validate();
    data.validate();
    params.validate();
    if (data.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
    if (data.dim() != params.input_dim()) throw std::invalid_argument("train_epoch: data dimension does not match the net");

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(derive_seed(seed, 0));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const bool use_reg = !cfg.reg_lambdas.empty() && (cfg.reg_lambdas[0] > 0.0 || cfg.reg_lambdas[1] > 0.0);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const RngSeed batch = derive_seed(seed, 1 + batch_index);
        MlpGrads grad = MlpGrads::zeros_like(params);
        Matrix reg1(params.w1.rows(), params.w1.cols());
        Matrix reg2(params.w2.rows(), params.w2.cols());
        for (std::size_t s = start; s < end; ++s) {
            const std::size_t idx = order[s];
            const Vector& x = data.inputs[idx];
            const std::size_t local = s - start;
            std::optional<DropoutMasks> masks;
            if (cfg.dropout_ratio > 0.0) masks = draw_masks(params, cfg.dropout_ratio, derive_seed(batch, 3 * local));
            const DropoutMasks* mp = masks ? &*masks : nullptr;
            loss_sum += cross_entropy(mlp_forward(params, x, mp).logits, data.labels[idx]);
            grad.add_scaled(mlp_backward(params, x, data.labels[idx], mp), 1.0);

            if (cfg.shadow_weight > 0.0 || use_reg) {
                const Activations clean = mlp_forward(params, x);
                if (cfg.shadow_weight > 0.0) {
                    const std::size_t z = argmax(clean.logits);
                    const Vector xs = shadow_synthesize(params, source_of(clean, cfg.synth.source_layer), cfg.synth,
                                                        derive_seed(batch, 3 * local + 1));
                    grad.add_scaled(mlp_backward(params, xs, z), cfg.shadow_weight);
                }
                if (use_reg) {
                    const Matrix r1 = regularizer_grad(params.w1, clean.h1, x, cfg.masked_regularizer);
                    const Matrix r2 = regularizer_grad(params.w2, clean.h2, clean.h1, cfg.masked_regularizer);
                    add_into(reg1.data(), r1.data(), 1.0);
                    add_into(reg2.data(), r2.data(), 1.0);
                }
            }
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        MlpGrads step = MlpGrads::zeros_like(params);
        step.add_scaled(grad, inv);
        if (use_reg) {
            add_into(step.w1.data(), reg1.data(), -cfg.reg_lambdas[0] * inv);
            add_into(step.w2.data(), reg2.data(), -cfg.reg_lambdas[1] * inv);
        }
        apply_update(params, step, cfg.learning_rate);
    }

    TrainResult out{std::move(params), {}};
    out.metrics.train_loss = loss_sum / static_cast<double>(data.size());
    if (validation) {
        out.metrics.validation = evaluate(out.params, *validation, cfg.synth, derive_seed(seed, ~std::uint64_t{0}));
    }
    return out;
}

double label_agreement(const MlpParams& params, const std::vector<Vector>& inputs_a,
                       const std::vector<Vector>& inputs_b) {
    if (inputs_a.size() != inputs_b.size()) throw std::invalid_argument("label_agreement: input counts differ");
    if (inputs_a.empty()) throw std::invalid_argument("label_agreement: no inputs");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < inputs_a.size(); ++i) agree += predict(params, inputs_a[i]) == predict(params, inputs_b[i]);
    return static_cast<double>(agree) / static_cast<double>(inputs_a.size());
}

Dataset gen_blobs(std::size_t n_per_class, std::size_t n_classes, std::size_t dim, double spread, RngSeed seed) {
    if (n_per_class == 0 || n_classes == 0 || dim == 0) throw std::invalid_argument("gen_blobs: counts must be positive");
    if (!(spread >= 0.0)) throw std::invalid_argument("gen_blobs: spread must be nonnegative");
    Dataset d;
    d.n_classes = n_classes;
    Rng rng(seed);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Vector x(dim);
            fill_gaussian(x, rng);
            for (double& v : x) v *= spread;
            x[c % dim] += 1.0 + static_cast<double>(c / dim);
            d.inputs.push_back(std::move(x));
            d.labels.push_back(c);
        }
    }
    return d;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::string& buf, std::size_t offset, const std::string& name) {
    if (offset + 4 > buf.size()) throw ParseError(name + ": truncated header", buf.size());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(buf[offset + static_cast<std::size_t>(i)]);
    return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    Dataset d;
    std::size_t max_label = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::size_t line_end = eol;
        if (line_end > pos && text[line_end - 1] == '\r') --line_end;
        if (line_end > pos) {
            std::vector<double> fields;
            std::size_t field_start = pos;
            std::size_t label_value = 0;
            bool first = true;
            while (field_start <= line_end) {
                std::size_t comma = text.find(',', field_start);
                if (comma == std::string::npos || comma > line_end) comma = line_end;
                const std::string field = text.substr(field_start, comma - field_start);
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(field, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (field.empty() || used != field.size() || !std::isfinite(v)) {
                    throw ParseError(path.string() + ": bad numeric field '" + field + "'", field_start);
                }
                if (first) {
                    if (v < 0.0 || v != std::floor(v)) throw ParseError(path.string() + ": label must be a nonnegative integer", field_start);
                    label_value = static_cast<std::size_t>(v);
                    first = false;
                } else {
                    fields.push_back(v);
                }
                field_start = comma + 1;
            }
            if (fields.empty()) throw ParseError(path.string() + ": row has no features", pos);
            if (!d.inputs.empty() && fields.size() != d.inputs.front().size()) {
                throw ParseError(path.string() + ": row has " + std::to_string(fields.size()) + " features, expected " +
                                     std::to_string(d.inputs.front().size()),
                                 pos);
            }
            d.inputs.push_back(std::move(fields));
            d.labels.push_back(label_value);
            max_label = std::max(max_label, label_value);
        }
        pos = eol + 1;
    }
    if (d.inputs.empty()) throw ParseError(path.string() + ": no rows", 0);
    d.n_classes = max_label + 1;
    return d;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);
    const std::string in = images_path.string();
    const std::string ln = labels_path.string();
    if (read_be32(img, 0, in) != 0x00000803u) throw ParseError(in + ": bad image magic", 0);
    if (read_be32(lab, 0, ln) != 0x00000801u) throw ParseError(ln + ": bad label magic", 0);
    const std::size_t count = read_be32(img, 4, in);
    const std::size_t rows = read_be32(img, 8, in);
    const std::size_t cols = read_be32(img, 12, in);
    const std::size_t label_count = read_be32(lab, 4, ln);
    if (label_count != count) {
        throw ParseError(ln + ": " + std::to_string(label_count) + " labels for " + std::to_string(count) + " images", 4);
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) throw ParseError(in + ": truncated pixel data", img.size());
    if (lab.size() < 8 + count) throw ParseError(ln + ": truncated label data", lab.size());
    Dataset d;
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        Vector x(pixels);
        for (std::size_t p = 0; p < pixels; ++p) x[p] = static_cast<unsigned char>(img[16 + i * pixels + p]) / 255.0;
        d.inputs.push_back(std::move(x));
        const std::size_t label = static_cast<unsigned char>(lab[8 + i]);
        d.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    d.n_classes = count == 0 ? 0 : max_label + 1;
    return d;
}

}  // namespace shadownet
