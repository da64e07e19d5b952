#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "thz/error.hpp"
#include "thz/fft.hpp"
#include "thz/parallel.hpp"
#include "thz/pcnn.hpp"

namespace thz::pcnn {

namespace {

// Neumaier compensated summation; keeps finite-difference probes of the loss
// above the rounding floor.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

Spectrum spectrum_of(std::span<const double> x, const Spectrum& reference) {
    const std::size_t N = reference.length;
    require(x.size() <= N, ErrorKind::dimension, "trace longer than the physics-loss transform length");
    std::vector<fft::Complex> buf(N);
    for (std::size_t t = 0; t < x.size(); ++t) buf[t] = x[t];
    fft::transform(buf, fft::Direction::forward);
    buf.resize(N / 2 + 1);
    return Spectrum{reference.df, N, std::move(buf)};
}

struct SamplePhysics {
    double re = 0.0;
    double ab = 0.0;
};

// Per-sample L_re and L_ab of a reconstruction against its target. When
// grad_x is non-empty, adds d(w_re * L_re + w_ab * L_ab)/dxhat to it. Unwrap
// offsets, anchoring and masks are treated as constants.
SamplePhysics sample_physics(std::span<const double> xhat, const PhysicsTarget& target, const PhysicsContext& ctx,
                             const PhysicsPlan& plan, double w_re, double w_ab, std::span<double> grad_x) {
    const Spectrum S = spectrum_of(xhat, ctx.reference);
    const auto dphi = relative_phase_delay(S, ctx.reference, plan.layout);
    const std::size_t nb = plan.layout.bins.size();
    const bool want_grad = !grad_x.empty();

    std::vector<double> n1(nb), alpha1(nb);
    std::vector<bool> ab_mask(nb, false);
    double re_sum = 0.0, ab_sum = 0.0;
    std::size_t ab_count = 0;
    for (std::size_t j = 0; j < nb; ++j) {
        if (!target.valid[j]) continue;
        const std::size_t k = plan.layout.bins[j];
        n1[j] = 1.0 + plan.kappa[j] * dphi[j];
        const double dn = target.n[j] - n1[j];
        re_sum += dn * dn;
        const double mag = std::abs(S.bins[k]);
        if (n1[j] > 0.0 && mag > 0.0) {
            const double r = mag / std::abs(ctx.reference.bins[k]);
            alpha1[j] = -(2.0 / plan.d_cm) * std::log(r * (n1[j] + 1.0) * (n1[j] + 1.0) / (4.0 * n1[j]));
            const double da = target.alpha[j] - alpha1[j];
            ab_sum += da * da;
            ab_mask[j] = true;
            ++ab_count;
        }
    }
    SamplePhysics out;
    out.re = re_sum / static_cast<double>(target.count);
    out.ab = ab_count ? ab_sum / static_cast<double>(ab_count) : 0.0;
    if (!want_grad || (w_re == 0.0 && w_ab == 0.0)) return out;

    const double cre = w_re / static_cast<double>(target.count);
    const double cab = ab_count ? w_ab / static_cast<double>(ab_count) : 0.0;
    std::vector<fft::Complex> G(ctx.reference.length, 0.0);
    for (std::size_t j = 0; j < nb; ++j) {
        if (!target.valid[j]) continue;
        const std::size_t k = plan.layout.bins[j];
        const double re = S.bins[k].real();
        const double im = S.bins[k].imag();
        const double mag2 = re * re + im * im;
        if (!(mag2 > 0.0)) continue;
        double g_n = -2.0 * cre * (target.n[j] - n1[j]);
        double g_lnmag = 0.0;
        if (ab_mask[j]) {
            const double n = n1[j];
            const double g_a = -2.0 * cab * (target.alpha[j] - alpha1[j]);
            g_n += g_a * (-(2.0 / plan.d_cm)) * (2.0 / (n + 1.0) - 1.0 / n);
            g_lnmag = g_a * (-(2.0 / plan.d_cm));
        }
        const double g_psi = g_n * plan.kappa[j];
        G[k] = fft::Complex((g_psi * im + g_lnmag * re) / mag2, (-g_psi * re + g_lnmag * im) / mag2);
    }
    fft::transform(G, fft::Direction::inverse);
    for (std::size_t t = 0; t < grad_x.size(); ++t) grad_x[t] += G[t].real();
    return out;
}

}  // namespace

PhysicsPlan::PhysicsPlan(const PhysicsContext& ctx)
    : layout(band_layout(ctx.reference, ctx.options)), d_cm(ctx.geometry.thickness_cm()) {
    ctx.geometry.validate();
    require(!layout.bins.empty(), ErrorKind::no_band, "no spectral bins inside the physics-loss band");
    kappa.resize(layout.bins.size());
    for (std::size_t j = 0; j < kappa.size(); ++j)
        kappa[j] = kSpeedOfLight / (2.0 * std::numbers::pi * layout.freqs[j] * ctx.geometry.thickness_mm);
}

PhysicsTarget physics_target(std::span<const double> x, const PhysicsContext& ctx, const PhysicsPlan& plan) {
    const auto oc = extract_constants(spectrum_of(x, ctx.reference), ctx.reference, ctx.geometry, ctx.options);
    PhysicsTarget t;
    const std::size_t nb = plan.layout.bins.size();
    t.n.resize(nb);
    t.alpha.resize(nb);
    t.valid.resize(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        const std::size_t k = plan.layout.bins[j];
        t.valid[j] = oc.valid[k];
        t.n[j] = oc.n[k];
        t.alpha[j] = oc.alpha[k];
        if (oc.valid[k]) ++t.count;
    }
    return t;
}

double loss_data(const Batch& x, const Batch& xhat) {
    require(!x.empty() && x.size() == xhat.size(), ErrorKind::dimension, "batch sizes differ or are empty");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i].size() == xhat[i].size(), ErrorKind::dimension, "trace lengths differ within the batch");
        double s = 0.0;
        for (std::size_t t = 0; t < x[i].size(); ++t) s += (x[i][t] - xhat[i][t]) * (x[i][t] - xhat[i][t]);
        total += s;
    }
    return total / static_cast<double>(x.size());
}

PhysicsLoss loss_physics(const Batch& x, const Batch& xhat, const PhysicsContext& ctx) {
    require(!x.empty() && x.size() == xhat.size(), ErrorKind::dimension, "batch sizes differ or are empty");
    const PhysicsPlan plan(ctx);
    PhysicsLoss out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i].size() == xhat[i].size(), ErrorKind::dimension, "trace lengths differ within the batch");
        const auto target = physics_target(x[i], ctx, plan);
        const auto s = sample_physics(xhat[i], target, ctx, plan, 0.0, 0.0, {});
        out.re += s.re;
        out.ab += s.ab;
    }
    out.re /= static_cast<double>(x.size());
    out.ab /= static_cast<double>(x.size());
    return out;
}

void TrainConfig::validate() const {
    require(batch_size >= 1, ErrorKind::usage, "batch size must be at least 1");
    require(epochs >= 1, ErrorKind::usage, "epoch count must be at least 1");
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::usage, "learning rate must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::usage, "Adam betas must be in [0, 1)");
    require(epsilon > 0.0, ErrorKind::usage, "Adam epsilon must be positive");
    require(clip_max_norm > 0.0, ErrorKind::usage, "clipping norm must be positive");
    require(physics_scale > 0.0, ErrorKind::usage, "physics scale must be positive");
    require(std::isfinite(lambda_max) && lambda_max >= 0.0, ErrorKind::usage, "lambda_max must be >= 0");
    require(!std::isnan(noise_level_db), ErrorKind::usage, "noise level must be a number");
}

double lambda_schedule(std::size_t epoch, const TrainConfig& config) {
    if (!config.physics || epoch <= config.ramp_start_epoch || config.epochs <= config.ramp_start_epoch) return 0.0;
    const double t = static_cast<double>(std::min(epoch, config.epochs) - config.ramp_start_epoch);
    return config.lambda_max * t / static_cast<double>(config.epochs - config.ramp_start_epoch);
}

double loss_total(double l_data, double l_re, double l_ab, const TrainConfig& config, std::size_t epoch) {
    const double lambda = lambda_schedule(epoch, config);
    if (lambda == 0.0) return l_data;
    return l_data + lambda * l_re / config.physics_scale + lambda * l_ab / config.physics_scale;
}

LossWeights loss_weights(const TrainConfig& config, std::size_t epoch) {
    const double w = lambda_schedule(epoch, config) / config.physics_scale;
    return {1.0, w, w};
}

double noise_std(double normalized_rms, const TrainConfig& config) {
    if (std::isinf(config.noise_level_db) && config.noise_level_db > 0) return 0.0;
    return normalized_rms * std::pow(10.0, -config.noise_level_db / 20.0);
}

BatchLoss evaluate_batch(const Network& net, std::span<const double> params, const Batch& inputs, const Batch& targets,
                         const std::vector<const PhysicsTarget*>& physics_targets, const PhysicsContext& ctx,
                         const PhysicsPlan& plan, const LossWeights& weights, std::span<double> grad) {
    const std::size_t B = inputs.size();
    require(B > 0 && targets.size() == B, ErrorKind::dimension, "batch inputs and targets differ in count");
    const bool physics = !physics_targets.empty();
    require(!physics || physics_targets.size() == B, ErrorKind::dimension, "one physics target per sample required");
    const bool want_grad = !grad.empty();
    const std::size_t P = net.layout().total;
    if (want_grad) {
        require(grad.size() == P, ErrorKind::dimension, "gradient vector has the wrong size");
        std::fill(grad.begin(), grad.end(), 0.0);
    }

    const double invB = 1.0 / static_cast<double>(B);
    std::vector<double> ld(B, 0.0), lre(B, 0.0), lab(B, 0.0);
    const std::size_t W = std::max<std::size_t>(1, std::min(worker_count(), B));
    std::vector<std::vector<double>> slots(want_grad ? W : 0, std::vector<double>(P));

    for (std::size_t first = 0; first < B; first += W) {
        const std::size_t count = std::min(W, B - first);
        parallel_for(count, [&](std::size_t s) {
            const std::size_t i = first + s;
            require(inputs[i].size() == targets[i].size(), ErrorKind::dimension, "input and target lengths differ");
            Network::Cache cache;
            net.forward(params, inputs[i], cache);
            const auto& y = cache.output;
            std::vector<double> g_out(want_grad ? y.size() : 0, 0.0);
            CompensatedSum sq;
            for (std::size_t t = 0; t < y.size(); ++t) {
                const double e = y[t] - targets[i][t];
                sq.add(e * e);
                if (want_grad) g_out[t] = weights.data * 2.0 * invB * e;
            }
            ld[i] = sq.value();
            if (physics) {
                const auto p = sample_physics(y, *physics_targets[i], ctx, plan, weights.re * invB, weights.ab * invB,
                                              g_out);
                lre[i] = p.re;
                lab[i] = p.ab;
            }
            if (want_grad) {
                auto& slot = slots[s];
                std::fill(slot.begin(), slot.end(), 0.0);
                net.backward(params, cache, g_out, slot);
            }
        });
        if (want_grad)
            for (std::size_t s = 0; s < count; ++s)
                for (std::size_t p = 0; p < P; ++p) grad[p] += slots[s][p];
    }

    CompensatedSum sd, sr, sa;
    for (std::size_t i = 0; i < B; ++i) {
        sd.add(ld[i]);
        sr.add(lre[i]);
        sa.add(lab[i]);
    }
    BatchLoss out;
    out.data = sd.value() * invB;
    out.re = sr.value() * invB;
    out.ab = sa.value() * invB;
    out.weighted = weights.data * out.data;
    if (weights.re != 0.0) out.weighted += weights.re * out.re;
    if (weights.ab != 0.0) out.weighted += weights.ab * out.ab;
    return out;
}

}  // namespace thz::pcnn
