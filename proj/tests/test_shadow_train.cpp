#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shadownet/errors.hpp"
#include "shadownet/shadow_train.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace shadownet;

namespace {

const std::filesystem::path kData = SHADOWNET_TEST_DATA;

Matrix to_matrix(const nlohmann::json& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c].get<double>();
    return m;
}

MlpParams fixture_params(nlohmann::json& doc) {
    std::ifstream in(kData / "forward_fixture.json");
    doc = nlohmann::json::parse(in);
    return {to_matrix(doc["w1"]), to_matrix(doc["w2"]), to_matrix(doc["w3"]), doc["b1"].get<Vector>(),
            doc["b2"].get<Vector>(), doc["b3"].get<Vector>()};
}

MlpParams random_params(std::size_t d, std::size_t h1, std::size_t h2, std::size_t c, std::uint64_t s) {
    MlpParams p = MlpParams::init(d, h1, h2, c, {s, 0});
    Rng rng({s, 1});
    for (double& b : p.b1) b = 0.1 * rng.normal();
    for (double& b : p.b2) b = 0.1 * rng.normal();
    for (double& b : p.b3) b = 0.1 * rng.normal();
    return p;
}

double loss_at(const MlpParams& p, const Vector& x, std::size_t y, const DropoutMasks* m = nullptr) {
    return cross_entropy(mlp_forward(p, x, m).logits, y);
}

bool kink_free(const MlpParams& p, const Vector& x) {
    const Activations a = mlp_forward(p, x);
    for (double v : a.pre1)
        if (std::abs(v) < 1e-3) return false;
    for (double v : a.pre2)
        if (std::abs(v) < 1e-3) return false;
    return true;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Vector random_vec(std::size_t n, std::uint64_t s) {
    Rng rng({s, 7});
    Vector v(n);
    fill_gaussian(v, rng);
    return v;
}

}  // namespace

TEST_CASE("forward matches the hand-computed table") {
    nlohmann::json doc;
    const MlpParams p = fixture_params(doc);
    for (const auto& s : doc["samples"]) {
        const Activations a = mlp_forward(p, s["x"].get<Vector>());
        CHECK(a.h1 == s["h1"].get<Vector>());
        CHECK(a.h2 == s["h2"].get<Vector>());
        CHECK(a.logits == s["logits"].get<Vector>());
    }
}

TEST_CASE("forward of zero parameters and a single-unit chain") {
    MlpParams z{Matrix(3, 4), Matrix(4, 5), Matrix(5, 2), Vector(4, 0.0), Vector(5, 0.0), Vector(2, 0.0)};
    CHECK(mlp_forward(z, Vector{1, -2, 3}).logits == Vector{0, 0});

    MlpParams chain{Matrix(1, 1, {2.0}), Matrix(1, 1, {-3.0}), Matrix(1, 2, {1.0, -1.0}), {-1.0}, {4.0}, {0.0, 0.0}};
    const Activations a = mlp_forward(chain, Vector{0.75});
    CHECK(a.h1 == Vector{0.5});
    CHECK(a.h2 == Vector{2.5});
    CHECK(a.logits == Vector{2.5, -2.5});
    CHECK_THROWS_AS(mlp_forward(chain, Vector{1, 2}), std::invalid_argument);
}

TEST_CASE("dropout masks scale hidden units") {
    nlohmann::json doc;
    const MlpParams p = fixture_params(doc);
    const DropoutMasks m{{2.0, 0.0}, {0.0, 2.0}};
    const Activations a = mlp_forward(p, Vector{1, 2}, &m);
    CHECK(a.h1 == Vector{4, 0});
    // pre2 = W2^T [4, 0] + b2 = [4.5, 0]
    CHECK(a.h2 == Vector{0, 0});
    const DropoutMasks bad{{1.0}, {1.0, 1.0}};
    CHECK_THROWS_AS(mlp_forward(p, Vector{1, 2}, &bad), std::invalid_argument);
}

TEST_CASE("init uses He scaling and zero biases") {
    const MlpParams p = MlpParams::init(400, 300, 200, 10, {1, 0});
    double s = 0;
    for (double v : p.w1.data()) s += v * v;
    CHECK(s / static_cast<double>(p.w1.size()) == doctest::Approx(2.0 / 400).epsilon(0.02));
    for (double b : p.b2) CHECK(b == 0.0);
    CHECK(p.input_dim() == 400);
    CHECK(p.n_classes() == 10);
    CHECK_THROWS_AS(MlpParams::init(4, 3, 2, 1, {1, 0}), std::invalid_argument);
}

TEST_CASE("backward matches central differences") {
    const MlpParams p = random_params(5, 7, 6, 3, 2);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Vector x = random_vec(5, s);
        if (!kink_free(p, x)) continue;
        const std::size_t y = s % 3;
        const MlpGrads g = mlp_backward(p, x, y);
        const double eps = 1e-5;
        auto probe = [&](auto member, const Matrix& analytic) {
            MlpParams q = p;
            Matrix& w = q.*member;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double saved = w.data()[i];
                w.data()[i] = saved + eps;
                const double up = loss_at(q, x, y);
                w.data()[i] = saved - eps;
                const double down = loss_at(q, x, y);
                w.data()[i] = saved;
                CHECK(rel(analytic.data()[i], (up - down) / (2 * eps)) <= 1e-4);
            }
        };
        probe(&MlpParams::w1, g.w1);
        probe(&MlpParams::w2, g.w2);
        probe(&MlpParams::w3, g.w3);
        for (std::size_t i = 0; i < p.b1.size(); ++i) {
            MlpParams q = p;
            q.b1[i] += eps;
            const double up = loss_at(q, x, y);
            q.b1[i] -= 2 * eps;
            const double down = loss_at(q, x, y);
            CHECK(rel(g.b1[i], (up - down) / (2 * eps)) <= 1e-4);
        }
        const GradCheck gc = check_gradients(p, x, y);
        CHECK(gc.kink_free);
        CHECK(gc.max_rel_error <= 1e-4);
    }
}

TEST_CASE("backward with dropout masks matches central differences") {
    const MlpParams p = random_params(4, 6, 5, 3, 3);
    const Vector x = random_vec(4, 11);
    REQUIRE(kink_free(p, x));
    const DropoutMasks m{{2, 0, 2, 2, 0, 2}, {0, 2, 2, 0, 2}};
    const MlpGrads g = mlp_backward(p, x, 1, &m);
    const double eps = 1e-5;
    MlpParams q = p;
    for (std::size_t i = 0; i < q.w2.size(); ++i) {
        const double saved = q.w2.data()[i];
        q.w2.data()[i] = saved + eps;
        const double up = loss_at(q, x, 1, &m);
        q.w2.data()[i] = saved - eps;
        const double down = loss_at(q, x, 1, &m);
        q.w2.data()[i] = saved;
        CHECK(rel(g.w2.data()[i], (up - down) / (2 * eps)) <= 1e-4);
    }
}

TEST_CASE("saturated correct prediction has a vanishing gradient") {
    MlpParams p{Matrix(1, 1, {1.0}), Matrix(1, 1, {1.0}), Matrix(1, 2, {60.0, -60.0}), {0.0}, {0.0}, {0.0, 0.0}};
    CHECK(mlp_backward(p, Vector{1.0}, 0).squared_norm() <= 1e-12);
    CHECK_THROWS_AS(mlp_backward(p, Vector{1.0}, 2), std::invalid_argument);
}

TEST_CASE("check_gradients flags kinks") {
    MlpParams p{Matrix(1, 1, {1.0}), Matrix(1, 1, {1.0}), Matrix(1, 2, {1.0, -1.0}), {0.0}, {0.0}, {0.0, 0.0}};
    const GradCheck g = check_gradients(p, Vector{0.0}, 0);
    CHECK_FALSE(g.kink_free);
    CHECK(g.min_abs_preact == 0.0);
    CHECK_THROWS_AS(check_gradients(p, Vector{1.0}, 0, 1e-5, 0), std::invalid_argument);
}

TEST_CASE("argmax ties and cross entropy") {
    CHECK(argmax(Vector{1, 3, 3}) == 1);
    CHECK(argmax(Vector{0, 0, 0}) == 0);
    CHECK(cross_entropy(Vector{0, 0}, 1) == doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(Vector{1000, 0}, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cross_entropy(Vector{0, 0}, 2), std::invalid_argument);
}

TEST_CASE("shadow synthesis") {
    const MlpParams p = random_params(12, 10, 8, 3, 4);
    CHECK(shadow_synthesize(p, Vector(8, 0.0), {}, {1, 0}) == Vector(12, 0.0));

    const Vector h2 = relu(random_vec(8, 5));
    const Vector want = relu(matvec(p.w1, relu(matvec(p.w2, h2))));
    CHECK(shadow_synthesize(p, h2, {}, {1, 0}) == want);

    SynthOptions keep_all;
    keep_all.sampling = true;
    keep_all.sampling_keep = 1.0;
    for (std::uint64_t s = 0; s < 5; ++s) CHECK(shadow_synthesize(p, h2, keep_all, {s, 3}) == want);

    SynthOptions from_logits;
    from_logits.source_layer = SourceLayer::h3;
    const Vector z = random_vec(3, 6);
    CHECK(shadow_synthesize(p, z, from_logits, {1, 0}) == shadow_synthesize(p, relu(matvec(p.w3, z)), {}, {1, 0}));
    CHECK_THROWS_AS(shadow_synthesize(p, z, {}, {1, 0}), std::invalid_argument);

    SynthOptions smooth;
    smooth.smoothing = true;
    CHECK_THROWS_AS(shadow_synthesize(p, h2, smooth, {1, 0}), std::invalid_argument);
    smooth.image_shape = ImageShape{4, 3, 1};
    CHECK(shadow_synthesize(p, h2, smooth, {1, 0}) == smooth3x3(want, {4, 3, 1}));
}

TEST_CASE("sampled synthesis is nonnegative and sparser than keep") {
    const MlpParams p = random_params(200, 150, 100, 3, 7);
    SynthOptions half;
    half.sampling = true;
    double nonzero = 0, total = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const Vector x = shadow_synthesize(p, relu(random_vec(100, 100 + s)), half, {s, 8});
        for (double v : x) {
            CHECK(v >= 0.0);
            nonzero += v != 0.0;
            total += 1;
        }
    }
    CHECK(nonzero / total <= 0.5);
}

TEST_CASE("smooth3x3") {
    const ImageShape s{5, 5, 1};
    for (double v : smooth3x3(Vector(25, 0.7), s)) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

    Vector spot(25, 0.0);
    spot[2 * 5 + 2] = 9.0;
    const Vector out = smooth3x3(spot, s);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            const bool inside = std::abs(x - 2) <= 1 && std::abs(y - 2) <= 1;
            CHECK(out[y * 5 + x] == doctest::Approx(inside ? 1.0 : 0.0));
        }

    // Images supported on the inner 3x3 keep their mean.
    Rng rng({9, 0});
    for (int trial = 0; trial < 20; ++trial) {
        Vector img(25, 0.0);
        for (int y = 1; y < 4; ++y)
            for (int x = 1; x < 4; ++x) img[y * 5 + x] = rng.uniform();
        double a = 0, b = 0;
        const Vector sm = smooth3x3(img, s);
        for (std::size_t i = 0; i < 25; ++i) {
            a += img[i];
            b += sm[i];
        }
        CHECK(b == doctest::Approx(a).epsilon(1e-12));
    }

    Vector two(2 * 9, 0.0);
    two[4] = 9.0;
    const Vector planes = smooth3x3(two, {3, 3, 2});
    for (std::size_t i = 9; i < 18; ++i) CHECK(planes[i] == 0.0);
    CHECK(planes[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(smooth3x3(Vector(10, 0.0), s), std::invalid_argument);
}

TEST_CASE("regularizer gradient") {
    const Matrix w = gaussian_matrix(9, 4, {10, 0});
    CHECK(regularizer_grad(w, Vector(4, 0.0), random_vec(9, 1), false) == Matrix(9, 4));
    const Vector h = relu(random_vec(4, 2));
    CHECK(regularizer_grad(w, h, relu(matvec(w, h)), false) == Matrix(9, 4));
    CHECK_THROWS_AS(regularizer_grad(w, h, Vector(3, 0.0), false), std::invalid_argument);

    const Vector x = relu(random_vec(9, 3));
    const Vector pre = matvec(w, h);
    const Matrix def = regularizer_grad(w, h, x, false);
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const double want = (x[r] - std::max(pre[r], 0.0) * (pre[r] > 0 ? 1.0 : 0.0)) * h[c];
            CHECK(def(r, c) == doctest::Approx(want));
        }

    const std::vector<std::size_t> subset{0, 3, 4, 8};
    const Matrix masked = regularizer_grad(w, h, x, true, &subset);
    auto objective = [&](const Matrix& m) {
        const Vector p = matvec(m, h);
        double s = 0;
        for (std::size_t r : subset) s += (x[r] - std::max(p[r], 0.0)) * (x[r] - std::max(p[r], 0.0));
        return s;
    };
    for (double v : pre) REQUIRE(std::abs(v) > 1e-3);
    const double eps = 1e-6;
    Matrix q = w;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double saved = q.data()[i];
        q.data()[i] = saved + eps;
        const double up = objective(q);
        q.data()[i] = saved - eps;
        const double down = objective(q);
        q.data()[i] = saved;
        CHECK(rel(masked.data()[i], -0.5 * (up - down) / (2 * eps)) <= 1e-4);
    }
    for (std::size_t c = 0; c < 4; ++c) CHECK(masked(1, c) == 0.0);
}

TEST_CASE("train_epoch with zero learning rate leaves parameters untouched") {
    const Dataset d = gen_blobs(20, 3, 4, 0.5, {11, 0});
    const MlpParams p = MlpParams::init(4, 16, 16, 3, {12, 0});
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.shadow_weight = 0.5;
    cfg.dropout_ratio = 0.5;
    cfg.reg_lambdas = {0.1, 0.1};
    cfg.batch_size = 7;
    CHECK(train_epoch(p, d, cfg, {13, 0}).params == p);
}

TEST_CASE("plain full-batch training equals gradient descent on the mean gradient") {
    const Dataset d = gen_blobs(10, 3, 4, 0.5, {14, 0});
    MlpParams p = MlpParams::init(4, 12, 10, 3, {15, 0});
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.batch_size = d.size();
    MlpParams trained = p;
    for (std::uint64_t e = 0; e < 3; ++e) {
        trained = train_epoch(trained, d, cfg, {16, e}).params;
        MlpGrads mean = MlpGrads::zeros_like(p);
        for (std::size_t i = 0; i < d.size(); ++i) mean.add_scaled(mlp_backward(p, d.inputs[i], d.labels[i]), 1.0 / d.size());
        auto step = [](std::span<double> w, std::span<const double> g) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.1 * g[i];
        };
        step(p.w1.data(), mean.w1.data());
        step(p.w2.data(), mean.w2.data());
        step(p.w3.data(), mean.w3.data());
        step(p.b1, mean.b1);
        step(p.b2, mean.b2);
        step(p.b3, mean.b3);
    }
    auto close = [](std::span<const double> a, std::span<const double> b) {
        double worst = 0;
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        return worst;
    };
    CHECK(close(trained.w1.data(), p.w1.data()) <= 1e-12);
    CHECK(close(trained.w2.data(), p.w2.data()) <= 1e-12);
    CHECK(close(trained.w3.data(), p.w3.data()) <= 1e-12);
    CHECK(close(trained.b1, p.b1) <= 1e-12);
    CHECK(close(trained.b2, p.b2) <= 1e-12);
    CHECK(close(trained.b3, p.b3) <= 1e-12);
}

TEST_CASE("train_epoch is deterministic") {
    const Dataset d = gen_blobs(15, 3, 6, 0.5, {17, 0});
    const MlpParams p = MlpParams::init(6, 20, 20, 3, {18, 0});
    TrainConfig cfg;
    cfg.shadow_weight = 0.5;
    cfg.dropout_ratio = 0.3;
    cfg.reg_lambdas = {0.01, 0.01};
    cfg.synth.sampling = true;
    cfg.batch_size = 8;
    const TrainResult a = train_epoch(p, d, cfg, {19, 0}, &d);
    const TrainResult b = train_epoch(p, d, cfg, {19, 0}, &d);
    CHECK(a.params == b.params);
    CHECK(a.metrics.train_loss == b.metrics.train_loss);
    CHECK(a.metrics.validation->synthetic_error == b.metrics.validation->synthetic_error);
    CHECK_FALSE(train_epoch(p, d, cfg, {19, 1}).params == a.params);
}

TEST_CASE("training loss does not increase over the first five epochs on blobs") {
    const Dataset d = gen_blobs(200, 3, 8, 0.5, {20, 0});
    MlpParams p = MlpParams::init(8, 256, 256, 3, {21, 0});
    TrainConfig cfg;
    cfg.shadow_weight = 0.5;
    cfg.batch_size = 50;
    double prev = INFINITY;
    for (std::uint64_t e = 0; e < 5; ++e) {
        TrainResult r = train_epoch(std::move(p), d, cfg, {22, e});
        CHECK(r.metrics.train_loss <= prev);
        prev = r.metrics.train_loss;
        p = std::move(r.params);
    }
}

TEST_CASE("label agreement") {
    const MlpParams p = random_params(3, 5, 4, 3, 23);
    std::vector<Vector> xs;
    for (std::uint64_t i = 0; i < 10; ++i) xs.push_back(random_vec(3, 200 + i));
    CHECK(label_agreement(p, xs, xs) == 1.0);
    CHECK_THROWS_AS(label_agreement(p, xs, {xs[0]}), std::invalid_argument);
    MlpParams flat{Matrix(3, 2), Matrix(2, 2), Matrix(2, 3), Vector(2, 0.0), Vector(2, 0.0), Vector(3, 0.0)};
    std::vector<Vector> ys;
    for (std::uint64_t i = 0; i < 10; ++i) ys.push_back(random_vec(3, 300 + i));
    CHECK(label_agreement(flat, xs, ys) == 1.0);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.reg_lambdas = {0.1};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    SynthOptions o;
    o.smoothing = true;
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
}

TEST_CASE("gen_blobs") {
    const Dataset d = gen_blobs(10, 3, 2, 0.5, {24, 0});
    CHECK(d.size() == 30);
    CHECK(d.dim() == 2);
    CHECK(d.n_classes == 3);
    CHECK(std::set<std::size_t>(d.labels.begin(), d.labels.end()) == std::set<std::size_t>{0, 1, 2});
    CHECK(gen_blobs(10, 3, 2, 0.5, {24, 0}).inputs == d.inputs);
}

TEST_CASE("load_csv") {
    const Dataset d = load_csv(kData / "tiny.csv");
    REQUIRE(d.size() == 3);
    CHECK(d.labels == std::vector<std::size_t>{1, 0, 2});
    CHECK(d.inputs[0] == Vector{0.5, 0.25});
    CHECK(d.inputs[1] == Vector{-1, 2});
    CHECK(d.inputs[2] == Vector{0.3, 4});
    CHECK(d.n_classes == 3);

    const auto bad = std::filesystem::temp_directory_path() / "shadownet_bad.csv";
    std::ofstream(bad) << "1,0.5\n2,abc\n";
    try {
        load_csv(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 8);
    }
}

TEST_CASE("load_idx") {
    const Dataset d = load_idx(kData / "tiny-images.idx3", kData / "tiny-labels.idx1");
    REQUIRE(d.size() == 2);
    CHECK(d.dim() == 6);
    CHECK(d.labels == std::vector<std::size_t>{7, 3});
    CHECK(d.inputs[0][1] == doctest::Approx(0.2));
    CHECK(d.inputs[1][0] == 1.0);

    const auto bad = std::filesystem::temp_directory_path() / "shadownet_bad.idx3";
    std::string bytes;
    {
        std::ifstream in(kData / "tiny-images.idx3", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    bytes[3] = 0x02;
    std::ofstream(bad, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_idx(bad, kData / "tiny-labels.idx1"), ParseError);
    CHECK_THROWS_AS(load_idx(kData / "tiny-labels.idx1", kData / "tiny-labels.idx1"), ParseError);
    bytes[3] = 0x03;
    bytes.resize(bytes.size() - 1);
    std::ofstream(bad, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_AS(load_idx(bad, kData / "tiny-labels.idx1"), ParseError);
}
