#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "thz/error.hpp"
#include "thz/parallel.hpp"
#include "thz/pcnn.hpp"

namespace thz::pcnn {

double clip_gradient(std::span<double> grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    const double coef = max_norm / (norm + 1e-6);
    if (coef < 1.0)
        for (double& g : grad) g *= coef;
    return norm;
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainResult train(const std::vector<PulseTrace>& dataset, const PulseTrace& reference, const SampleGeometry& geometry,
                  const TrainConfig& config, const Architecture& arch_in) {
    config.validate();
    require(!dataset.empty(), ErrorKind::input, "training set is empty");
    const std::size_t L = dataset.front().size();
    const double dt = dataset.front().dt();
    for (const auto& tr : dataset) {
        require(tr.size() == L, ErrorKind::dimension, "training traces differ in length");
        require(std::abs(tr.dt() - dt) <= 1e-9 * dt, ErrorKind::dimension, "training traces differ in sample spacing");
    }
    require(std::abs(reference.dt() - dt) <= 1e-9 * dt, ErrorKind::dimension,
            "reference and training traces differ in sample spacing");

    double scale = 0.0;
    for (const auto& tr : dataset)
        for (double v : tr.samples()) scale = std::max(scale, std::abs(v));
    require(scale > 0.0, ErrorKind::degenerate, "training traces are all zero");

    Architecture arch = arch_in;
    arch.input_length = L;
    const auto ctx = PhysicsContext::from_reference(reference, L, geometry, config.optics);
    const PhysicsPlan plan(ctx);
    TrainResult result{initialize(arch, ctx, config.seed, scale), {}};
    Model& model = result.model;
    const Network net(arch);

    const std::size_t n = dataset.size();
    Batch data(n);
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = dataset[i].samples();
        data[i].resize(L);
        for (std::size_t t = 0; t < L; ++t) {
            data[i][t] = s[t] / scale;
            energy += data[i][t] * data[i][t];
        }
    }
    const double sigma = noise_std(std::sqrt(energy / static_cast<double>(n * L)), config);

    std::vector<PhysicsTarget> targets(n);
    parallel_for(n, [&](std::size_t i) { targets[i] = physics_target(data[i], ctx, plan); });

    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 1u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);

    const std::size_t P = model.params.size();
    std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
    std::vector<std::size_t> order(n);
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto weights = loss_weights(config, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double sum_data = 0.0, sum_re = 0.0, sum_ab = 0.0;

        for (std::size_t first = 0; first < n; first += config.batch_size) {
            const std::size_t B = std::min(config.batch_size, n - first);
            Batch inputs(B), clean(B);
            std::vector<const PhysicsTarget*> phys(B);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t idx = order[first + b];
                clean[b] = data[idx];
                inputs[b] = data[idx];
                if (sigma > 0.0)
                    for (double& x : inputs[b]) x += sigma * noise(rng);
                phys[b] = &targets[idx];
            }
            const auto loss = evaluate_batch(net, model.params, inputs, clean, phys, ctx, plan, weights, grad);
            if (!std::isfinite(loss.weighted) || !all_finite(grad))
                fail(ErrorKind::numeric, "non-finite loss or gradient in epoch " + std::to_string(epoch));
            sum_data += loss.data * static_cast<double>(B);
            sum_re += loss.re * static_cast<double>(B);
            sum_ab += loss.ab * static_cast<double>(B);

            clip_gradient(grad, config.clip_max_norm);
            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < P; ++p) {
                m[p] = config.beta1 * m[p] + (1.0 - config.beta1) * grad[p];
                v[p] = config.beta2 * v[p] + (1.0 - config.beta2) * grad[p] * grad[p];
                const double mhat = m[p] / bc1;
                const double vhat = v[p] / bc2;
                model.params[p] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
            }
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lambda = lambda_schedule(epoch, config);
        entry.loss_data = sum_data / static_cast<double>(n);
        entry.loss_re = sum_re / static_cast<double>(n);
        entry.loss_ab = sum_ab / static_cast<double>(n);
        entry.loss_total = loss_total(entry.loss_data, entry.loss_re, entry.loss_ab, config, epoch);
        if (!std::isfinite(entry.loss_total) || !all_finite(model.params))
            fail(ErrorKind::numeric, "training diverged in epoch " + std::to_string(epoch));
        result.log.push_back(entry);
    }
    return result;
}

GradCheckReport gradient_check(const Model& model, const Batch& batch, const TrainConfig& config, std::size_t epoch,
                               LossTerm term, const GradCheckOptions& options) {
    require(!batch.empty(), ErrorKind::input, "gradient check needs a non-empty batch");
    require(options.step > 0.0, ErrorKind::usage, "finite-difference step must be positive");
    const Network net(model.arch);
    const PhysicsPlan plan(model.physics);

    Batch x(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x[i] = batch[i];
        for (double& v : x[i]) v /= model.scale;
    }
    LossWeights w;
    switch (term) {
        case LossTerm::total: w = loss_weights(config, epoch); break;
        case LossTerm::data: w = {1.0, 0.0, 0.0}; break;
        case LossTerm::re: w = {0.0, 1.0, 0.0}; break;
        case LossTerm::ab: w = {0.0, 0.0, 1.0}; break;
    }

    // physics targets are only needed (and only defined) when a physics term carries weight
    std::vector<PhysicsTarget> targets;
    std::vector<const PhysicsTarget*> phys;
    if (w.re != 0.0 || w.ab != 0.0) {
        targets.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            targets[i] = physics_target(x[i], model.physics, plan);
            phys.push_back(&targets[i]);
        }
    }

    std::vector<double> params = model.params;
    std::vector<double> analytic(params.size());
    evaluate_batch(net, params, x, x, phys, model.physics, plan, w, analytic);
    if (options.corrupt_analytic) {
        std::size_t j = 0;
        for (std::size_t p = 1; p < analytic.size(); ++p)
            if (std::abs(analytic[p]) > std::abs(analytic[j])) j = p;
        analytic[j] = analytic[j] * 1.01 + 1e-6;
    }

    GradCheckReport report;
    report.parameters = params.size();
    const double h = options.step;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        const double plus = saved + h;
        const double minus = saved - h;
        params[p] = plus;
        const double up = evaluate_batch(net, params, x, x, phys, model.physics, plan, w, {}).weighted;
        params[p] = minus;
        const double down = evaluate_batch(net, params, x, x, phys, model.physics, plan, w, {}).weighted;
        params[p] = saved;
        const double numeric = (up - down) / (plus - minus);  // actual representable step
        const double abs_err = std::abs(analytic[p] - numeric);
        const double denom = std::max({std::abs(analytic[p]), std::abs(numeric), 1e-8});
        const double rel = abs_err / denom;
        report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
        if (!(rel <= report.max_relative_error)) {
            report.max_relative_error = rel;
            report.worst_parameter = p;
            report.worst_analytic = analytic[p];
            report.worst_numeric = numeric;
        }
    }
    return report;
}

GradCheckFixture reduced_fixture(std::uint64_t seed) {
    constexpr std::size_t kLength = 64;
    const double dt = 1700.0 / 20480.0;
    std::vector<double> pulse(kLength);
    for (std::size_t k = 0; k < kLength; ++k) {
        const double u = (static_cast<double>(k) * dt - 1.5) / 0.25;
        pulse[k] = -u * std::exp(0.5 - 0.5 * u * u);
    }
    const PulseTrace reference(dt, 0.0, pulse);
    const SampleGeometry geometry{0.3};
    const Spectrum ref_spec = forward_transform(reference);

    GradCheckFixture fx;
    for (int i = 0; i < 3; ++i) {
        const auto material = MaterialModel::constant(1.8 + 0.2 * i, 10.0 + 5.0 * i);
        const auto trace = inverse_transform(apply_forward_model(ref_spec, material, geometry), kLength);
        fx.batch.emplace_back(trace.samples().begin(), trace.samples().end());
    }
    const auto ctx = PhysicsContext::from_reference(reference, kLength, geometry, ExtractionOptions{});
    fx.model = initialize(Architecture::reduced(), ctx, seed, 1.0);
    return fx;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "epoch,lambda,loss_data,loss_re,loss_ab,loss_total\n";
    char line[256];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lambda, e.loss_data,
                      e.loss_re, e.loss_ab, e.loss_total);
        os << line;
    }
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace thz::pcnn
