#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "thz/pcnn.hpp"

using namespace thz;
using namespace thz::pcnn;
using test::kind_of;

namespace {

constexpr double kC = 0.299792458;  // mm/ps

void zero_biases(Model& m) {
    const ParameterLayout layout(m.arch);
    for (const auto& t : layout.tensors)
        if (t.name.ends_with(".bias")) std::fill_n(m.params.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size, 0.0);
}

Model standard_model(std::uint64_t seed) {
    const auto ref = test::test_pulse(3072, 1700.0 / 20480.0, 20.0, 0.25);
    const auto ctx = PhysicsContext::from_reference(ref, 3072, SampleGeometry{0.3}, ExtractionOptions{});
    return initialize(Architecture::standard(), ctx, seed);
}

PulseTrace as_trace(const std::vector<double>& v) { return PulseTrace(1700.0 / 20480.0, 0.0, v); }

std::vector<double> shifted(const std::vector<double>& x, std::size_t by) {
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[(k + by) % x.size()] = x[k];
    return out;
}

Batch scaled(const Batch& b, double k) {
    Batch out = b;
    for (auto& row : out)
        for (auto& v : row) v *= k;
    return out;
}

std::vector<PulseTrace> fixture_dataset(const GradCheckFixture& fx) {
    std::vector<PulseTrace> out;
    for (const auto& row : fx.batch) out.push_back(as_trace(row));
    for (std::size_t s = 1; s <= 5; ++s)
        for (const auto& row : fx.batch) out.push_back(as_trace(shifted(row, s)));
    return out;
}

PulseTrace fixture_reference(const GradCheckFixture& fx) {
    return inverse_transform(fx.model.physics.reference, fx.model.arch.input_length);
}

TrainConfig short_config() {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.ramp_start_epoch = 1;
    cfg.batch_size = 8;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST(Architecture, StandardStageLengths) {
    const auto a = Architecture::standard();
    EXPECT_EQ(a.encoder_lengths(3072), (std::vector<std::size_t>{3072, 768, 192, 48, 12}));
    EXPECT_EQ(a.decoder_lengths(), (std::vector<std::size_t>{12, 48, 192, 768, 3072}));
    EXPECT_EQ(a.latent_dim, 32u);
    EXPECT_EQ(a.channels, (std::vector<std::size_t>{1, 16, 32, 64, 128}));
    const ParameterLayout layout(a);
    EXPECT_EQ(layout.get("enc0.weight").shape, (std::vector<std::size_t>{16, 1, 8}));
    EXPECT_EQ(layout.get("fc.weight").shape, (std::vector<std::size_t>{32, 128 * 12}));
    EXPECT_EQ(layout.get("dfc.weight").shape, (std::vector<std::size_t>{128 * 12, 32}));
    EXPECT_EQ(layout.get("dec3.weight").shape, (std::vector<std::size_t>{16, 1, 8}));
    EXPECT_EQ(ParameterLayout(Architecture::reduced()).total, 161u);
}

TEST(Architecture, OutputLengthMatchesInput) {
    const auto model = standard_model(3);
    for (std::size_t len : {64u, 100u, 1000u, 3000u, 3072u, 4096u}) {
        const auto x = test::random_vector(len, len);
        EXPECT_EQ(reconstruct(model, as_trace(x)).size(), len) << len;
    }
    const auto fx = reduced_fixture();
    for (std::size_t len : {64u, 65u, 200u}) EXPECT_EQ(reconstruct(fx.model, as_trace(test::random_vector(len, 1))).size(), len);
}

TEST(Encode, ZeroTraceZeroBiasesGivesZeroLatent) {
    auto model = standard_model(4);
    zero_biases(model);
    for (double v : encode(model, as_trace(std::vector<double>(3072, 0.0)))) EXPECT_EQ(v, 0.0);
    std::fill(model.params.begin(), model.params.end(), 0.0);
    for (double v : decode(model, std::vector<double>(32, 0.0))) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(decode(model, std::vector<double>(32, 0.0)).size(), 3072u);
}

TEST(Encode, DeterministicAndNotHomogeneous) {
    auto model = standard_model(8);
    zero_biases(model);
    const auto x = test::random_vector(3072, 99);
    std::vector<double> x2(x);
    for (auto& v : x2) v *= -2.0;
    const auto a = encode(model, as_trace(x));
    EXPECT_EQ(a, encode(model, as_trace(x)));
    const auto b = encode(model, as_trace(x2));
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(b[i] + 2.0 * a[i]));
    EXPECT_GT(diff, 1e-6);
    EXPECT_EQ(a.size(), 32u);
}

TEST(Encode, NonFiniteIsNumericError) {
    auto model = standard_model(8);
    model.params[ParameterLayout(model.arch).get("fc.bias").offset] = std::numeric_limits<double>::infinity();
    const auto x = test::random_vector(3072, 1);
    EXPECT_EQ(kind_of([&] { (void)encode(model, as_trace(x)); }), ErrorKind::numeric);
}

TEST(LossData, ExamplesAndOracle) {
    EXPECT_EQ(loss_data({{0.0, 0.0}}, {{3.0, 4.0}}), 25.0);
    const Batch x{test::random_vector(50, 1), test::random_vector(50, 2), test::random_vector(50, 3)};
    EXPECT_EQ(loss_data(x, x), 0.0);
    const Batch y{test::random_vector(50, 4), test::random_vector(50, 5), test::random_vector(50, 6)};
    double oracle = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t k = 0; k < 50; ++k) oracle += (x[i][k] - y[i][k]) * (x[i][k] - y[i][k]);
    EXPECT_NEAR(loss_data(x, y), oracle / 3.0, 1e-12);
    EXPECT_EQ(kind_of([] { (void)loss_data({{1.0}}, {{1.0, 2.0}}); }), ErrorKind::dimension);
}

TEST(LossPhysics, IdentityAndScaleLaw) {
    const auto fx = reduced_fixture();
    const auto& ctx = fx.model.physics;
    const auto same = loss_physics(fx.batch, fx.batch, ctx);
    EXPECT_NEAR(same.re, 0.0, 1e-20);
    EXPECT_NEAR(same.ab, 0.0, 1e-16);
    for (double k : {0.5, 0.8, 1.7}) {
        const auto l = loss_physics(fx.batch, scaled(fx.batch, k), ctx);
        const double d_cm = 0.03;
        EXPECT_NEAR(l.re, 0.0, 1e-20);
        EXPECT_NEAR(l.ab, std::pow(2.0 * std::log(k) / d_cm, 2), 1e-9 * std::pow(2.0 * std::log(k) / d_cm, 2)) << k;
    }
}

TEST(LossPhysics, OneSampleDelay) {
    const auto fx = reduced_fixture();
    Batch delayed;
    for (const auto& row : fx.batch) delayed.push_back(shifted(row, 1));
    const auto l = loss_physics(fx.batch, delayed, fx.model.physics);
    const double dn = kC * (1700.0 / 20480.0) / 0.3;
    EXPECT_NEAR(l.re, dn * dn, 1e-9 * dn * dn);
}

TEST(LossPhysics, CommonScaleInvariance) {
    const auto fx = reduced_fixture();
    Batch other;
    for (std::size_t i = 0; i < fx.batch.size(); ++i) {
        other.push_back(fx.batch[(i + 1) % fx.batch.size()]);
        for (auto& v : other.back()) v *= 0.9;
    }
    const auto base = loss_physics(fx.batch, other, fx.model.physics);
    for (double k : {0.01, 3.0, 250.0}) {
        const auto l = loss_physics(scaled(fx.batch, k), scaled(other, k), fx.model.physics);
        EXPECT_NEAR(l.re, base.re, 1e-9 * base.re);
        EXPECT_NEAR(l.ab, base.ab, 1e-9 * base.ab);
    }
    EXPECT_GT(base.re, 0.0);
}

TEST(LossPhysics, EmptyBandIsError) {
    const auto fx = reduced_fixture();
    const Batch zero{std::vector<double>(64, 0.0)};
    EXPECT_EQ(kind_of([&] { (void)loss_physics(zero, zero, fx.model.physics); }), ErrorKind::no_band);
}

TEST(Schedule, EveryEpoch) {
    const TrainConfig cfg;
    double prev = 0;
    for (std::size_t t = 1; t <= cfg.epochs; ++t) {
        const double l = lambda_schedule(t, cfg);
        if (t <= 10)
            EXPECT_EQ(l, 0.0) << t;
        else
            EXPECT_NEAR(l, (static_cast<double>(t) - 10.0) / 40.0, 1e-15) << t;
        EXPECT_GE(l, prev);
        prev = l;
        const auto w = loss_weights(cfg, t);
        EXPECT_EQ(w.data, 1.0);
        EXPECT_EQ(w.re, l / 1000.0);
        EXPECT_EQ(w.ab, l / 1000.0);
    }
    EXPECT_EQ(lambda_schedule(50, cfg), 1.0);
    EXPECT_EQ(lambda_schedule(30, cfg), 0.5);
}

TEST(Schedule, LossTotal) {
    const TrainConfig cfg;
    for (std::size_t t = 1; t <= 10; ++t) EXPECT_EQ(loss_total(0.123456789, 77.0, 88.0, cfg, t), 0.123456789);
    EXPECT_DOUBLE_EQ(loss_total(1.0, 500.0, 500.0, cfg, 50), 2.0);
}

TEST(Noise, DecibelScale) {
    TrainConfig cfg;
    EXPECT_NEAR(noise_std(0.2, cfg), 0.2 * std::pow(10.0, -25.0 / 20.0), 1e-15);
    cfg.noise_level_db = std::numeric_limits<double>::infinity();
    EXPECT_EQ(noise_std(0.2, cfg), 0.0);
}

// coefficient max_norm / (norm + 1e-6), applied only when below 1
TEST(Clip, GlobalNorm) {
    std::vector<double> g{3.0, 4.0};
    EXPECT_EQ(clip_gradient(g, 6.0), 5.0);
    EXPECT_EQ(g, (std::vector<double>{3.0, 4.0}));
    EXPECT_EQ(clip_gradient(g, 1.0), 5.0);
    const double coef = 1.0 / (5.0 + 1e-6);
    EXPECT_DOUBLE_EQ(g[0], 3.0 * coef);
    EXPECT_DOUBLE_EQ(g[1], 4.0 * coef);
    auto r = test::random_vector(1000, 3);
    clip_gradient(r, 1e-9);
    double n = 0;
    for (double v : r) n += v * v;
    EXPECT_LE(std::sqrt(n), 1e-9);
}

TEST(Train, ZeroLearningRateKeepsWeights) {
    const auto fx = reduced_fixture();
    auto cfg = short_config();
    cfg.learning_rate = 0.0;
    const auto result = train(fixture_dataset(fx), fixture_reference(fx), SampleGeometry{0.3}, cfg,
                              Architecture::reduced());
    const auto init = initialize(Architecture::reduced(), result.model.physics, cfg.seed, result.model.scale);
    EXPECT_EQ(result.model.params, init.params);
    EXPECT_EQ(result.log.size(), cfg.epochs);
}

TEST(Train, DeterministicAndLogged) {
    const auto fx = reduced_fixture();
    const auto cfg = short_config();
    const auto data = fixture_dataset(fx);
    const auto a = train(data, fixture_reference(fx), SampleGeometry{0.3}, cfg, Architecture::reduced());
    const auto b = train(data, fixture_reference(fx), SampleGeometry{0.3}, cfg, Architecture::reduced());
    EXPECT_EQ(a.model.params, b.model.params);
    ASSERT_EQ(a.log.size(), 4u);
    EXPECT_EQ(a.log[0].epoch, 1u);
    EXPECT_EQ(a.log[0].lambda, 0.0);
    EXPECT_EQ(a.log[3].lambda, 1.0);
    for (const auto& e : a.log) {
        EXPECT_TRUE(std::isfinite(e.loss_total));
        EXPECT_NEAR(e.loss_total, loss_total(e.loss_data, e.loss_re, e.loss_ab, cfg, e.epoch),
                    1e-12 * std::max(1.0, e.loss_total));
    }
    auto other = cfg;
    other.seed = 6;
    EXPECT_NE(train(data, fixture_reference(fx), SampleGeometry{0.3}, other, Architecture::reduced()).model.params,
              a.model.params);
    double scale = 0;
    for (const auto& t : data)
        for (double v : t.samples()) scale = std::max(scale, std::abs(v));
    EXPECT_EQ(a.model.scale, scale);
}

TEST(Train, EmptyDatasetRejected) {
    const auto fx = reduced_fixture();
    EXPECT_TRUE(kind_of([&] {
                    (void)train({}, fixture_reference(fx), SampleGeometry{0.3}, short_config(), Architecture::reduced());
                }).has_value());
}

TEST(GradCheck, Thresholds) {
    const auto fx = reduced_fixture();
    const TrainConfig cfg;
    EXPECT_LT(gradient_check(fx.model, fx.batch, cfg, 1).max_relative_error, 1e-6);
    const auto r = gradient_check(fx.model, fx.batch, cfg, cfg.epochs);
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_EQ(r.parameters, 161u);
    GradCheckOptions corrupt;
    corrupt.corrupt_analytic = true;
    EXPECT_GT(gradient_check(fx.model, fx.batch, cfg, 1, LossTerm::total, corrupt).max_relative_error, 1e-3);
}

TEST(GradCheck, ZeroModelZeroBatch) {
    auto fx = reduced_fixture();
    std::fill(fx.model.params.begin(), fx.model.params.end(), 0.0);
    const Batch zero(2, std::vector<double>(64, 0.0));
    const auto r = gradient_check(fx.model, zero, TrainConfig{}, 1, LossTerm::data);
    EXPECT_EQ(r.max_absolute_error, 0.0);
    EXPECT_EQ(r.worst_analytic, 0.0);
    EXPECT_EQ(r.worst_numeric, 0.0);
}

TEST(Latent, OrderIndexAndConstantCube) {
    const auto fx = reduced_fixture();
    const auto& t = fx.batch[0];
    ScanCube same{2, 2, 64, 0.5, 1700.0 / 20480.0, 0.0, {}};
    for (int p = 0; p < 4; ++p) same.data.insert(same.data.end(), t.begin(), t.end());
    for (std::size_t i = 0; i < 4; ++i) {
        const auto map = latent_map(same, fx.model, i);
        for (double v : map.values) EXPECT_EQ(v, map.values[0]);
    }
    EXPECT_EQ(kind_of([&] { (void)latent_map(same, fx.model, 4); }), ErrorKind::index);

    const std::vector<std::vector<double>> lat{{0, 5, 1, 1}, {0, -5, 2, 1}, {0, 5, 3, 1}};
    EXPECT_EQ(latent_order(lat), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(ModelFile, RoundTrip) {
    test::TempDir dir("pcnn");
    const auto fx = reduced_fixture();
    auto model = fx.model;
    model.scale = 0.123;
    const auto bytes = encode_model(model);
    const auto back = decode_model(bytes);
    EXPECT_EQ(back.arch, model.arch);
    EXPECT_EQ(back.params, model.params);
    EXPECT_EQ(back.scale, model.scale);
    EXPECT_EQ(back.physics.geometry.thickness_mm, model.physics.geometry.thickness_mm);
    EXPECT_EQ(back.physics.reference.bins, model.physics.reference.bins);
    EXPECT_EQ(encode_model(back), bytes);

    write_model(dir / "m.pcnn", model);
    EXPECT_EQ(test::read_bytes(dir / "m.pcnn"), bytes);
    EXPECT_EQ(read_model(dir / "m.pcnn").params, model.params);

    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_EQ(kind_of([&] { (void)decode_model(bad); }), ErrorKind::input);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    EXPECT_EQ(kind_of([&] { (void)decode_model(cut); }), ErrorKind::input);
}
