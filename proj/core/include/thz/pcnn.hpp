#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "thz/cube.hpp"
#include "thz/optics.hpp"
#include "thz/signal.hpp"

namespace thz::pcnn {

/// Convolutional autoencoder shape. Encoder stages are Conv1d(kernel, stride,
/// padding) + ReLU over `channels`; an adaptive average pool brings the
/// temporal axis to `pooled_length`; a linear layer maps to the latent.
/// The decoder mirrors it: linear + ReLU, then transposed convolutions with
/// ReLU on all but the last stage, then linear interpolation to the input
/// length.
struct Architecture {
    std::size_t input_length = 3072;
    std::vector<std::size_t> channels{1, 16, 32, 64, 128};
    std::size_t kernel = 8;
    std::size_t stride = 4;
    std::size_t padding = 2;
    std::size_t pooled_length = 12;
    std::size_t latent_dim = 32;

    static Architecture standard() { return {}; }
    /// Small network for finite-difference checks: 1->2->2, input 64, latent 4.
    static Architecture reduced();

    void validate() const;
    [[nodiscard]] std::size_t stages() const noexcept { return channels.size() - 1; }
    [[nodiscard]] std::size_t bottleneck_channels() const noexcept { return channels.back(); }
    [[nodiscard]] std::size_t conv_length(std::size_t in) const;   // 0 if the stage cannot run
    [[nodiscard]] std::size_t tconv_length(std::size_t in) const;
    /// Shortest input every encoder stage can consume; shorter inputs are
    /// zero-padded up to it.
    [[nodiscard]] std::size_t min_input_length() const;
    /// Temporal lengths from the (padded) input through each encoder stage.
    [[nodiscard]] std::vector<std::size_t> encoder_lengths(std::size_t input_length) const;
    /// Temporal lengths from the pooled bottleneck through each decoder stage.
    [[nodiscard]] std::vector<std::size_t> decoder_lengths() const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Flat parameter vector layout in declaration order:
/// enc{i}.weight [out][in][k], enc{i}.bias, fc.weight [latent][C*P], fc.bias,
/// dfc.weight [C*P][latent], dfc.bias, dec{j}.weight [in][out][k], dec{j}.bias.
struct ParameterLayout {
    std::vector<TensorInfo> tensors;
    std::size_t total = 0;

    explicit ParameterLayout(const Architecture& arch);
    [[nodiscard]] const TensorInfo& get(const std::string& name) const;
};

/// Reference spectrum and extraction settings for the physics loss.
struct PhysicsContext {
    Spectrum reference;
    SampleGeometry geometry;
    ExtractionOptions options;

    /// Reference transformed at the padded length used for inputs of `input_length`.
    static PhysicsContext from_reference(const PulseTrace& reference, std::size_t input_length,
                                         const SampleGeometry& geometry, const ExtractionOptions& options);
};

struct Model {
    Architecture arch;
    std::vector<double> params;
    double scale = 1.0;  // traces are divided by this before entering the network
    PhysicsContext physics;
};

/// Fan-in scaled uniform initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Model initialize(const Architecture& arch, const PhysicsContext& physics, std::uint64_t seed, double scale = 1.0);

/// Forward/backward machinery on normalized single traces.
class Network {
public:
    explicit Network(Architecture arch);

    struct Cache {
        std::size_t input_length = 0;          // unpadded input length; output has this length
        std::vector<std::vector<double>> enc;  // [0] padded input, [s] output of encoder stage s (post-ReLU)
        std::vector<double> pooled;            // C x P
        std::vector<double> latent;
        std::vector<std::vector<double>> dec;  // [0] decoder FC output (post-ReLU), [j] output of stage j
        std::vector<double> output;            // dec.back() interpolated to input_length
    };

    [[nodiscard]] const Architecture& arch() const noexcept { return arch_; }
    [[nodiscard]] const ParameterLayout& layout() const noexcept { return layout_; }

    void encode(std::span<const double> params, std::span<const double> x, Cache& cache) const;
    void decode(std::span<const double> params, std::span<const double> latent, std::size_t out_length,
                Cache& cache) const;
    void forward(std::span<const double> params, std::span<const double> x, Cache& cache) const;
    /// Accumulates dLoss/dparams given dLoss/doutput (length cache.output.size()).
    void backward(std::span<const double> params, const Cache& cache, std::span<const double> grad_output,
                  std::span<double> grad_params) const;

private:
    Architecture arch_;
    ParameterLayout layout_;
};

/// Latent vector of a trace (normalized by the model scale). Throws
/// ErrorKind::numeric on non-finite activations.
std::vector<double> encode(const Model& model, const PulseTrace& trace);
/// Reconstruction from a latent, de-normalized; length defaults to the
/// architecture's input length.
std::vector<double> decode(const Model& model, std::span<const double> latent, std::size_t length = 0);
PulseTrace reconstruct(const Model& model, const PulseTrace& trace);

// --- losses -------------------------------------------------------------

using Batch = std::vector<std::vector<double>>;

/// (1/N) sum_i ||x_i - xhat_i||^2
double loss_data(const Batch& x, const Batch& xhat);

struct PhysicsLoss {
    double re = 0.0;
    double ab = 0.0;
};

/// Per-trace optics of a clean input, restricted to the in-band bins.
struct PhysicsTarget {
    std::vector<double> n;
    std::vector<double> alpha;
    std::vector<bool> valid;
    std::size_t count = 0;
};

struct PhysicsPlan {
    BandLayout layout;
    std::vector<double> kappa;  // c / (2 pi f d) per layout bin
    double d_cm = 0.0;

    explicit PhysicsPlan(const PhysicsContext& ctx);
};

/// Optics of x via extract_constants. Throws ErrorKind::no_band when no bin is valid.
PhysicsTarget physics_target(std::span<const double> x, const PhysicsContext& ctx, const PhysicsPlan& plan);

/// L_re, L_ab: batch mean of the per-trace mean over the input's valid bins of
/// (n0 - n1)^2 and (alpha0 - alpha1)^2 (1/cm). L_ab additionally skips bins
/// where the reconstruction's log argument is undefined (n1 <= 0 or zero
/// magnitude).
PhysicsLoss loss_physics(const Batch& x, const Batch& xhat, const PhysicsContext& ctx);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_max_norm = 5.0;
    double physics_scale = 1000.0;    // S
    std::size_t ramp_start_epoch = 10;
    double lambda_max = 1.0;
    double noise_level_db = 25.0;     // input SNR in dB; +inf disables the noise
    bool physics = true;              // false trains the plain autoencoder baseline
    std::uint64_t seed = 0;
    ExtractionOptions optics;

    void validate() const;
};

/// lambda(t): 0 for t <= ramp_start, then linear to lambda_max at t = epochs.
double lambda_schedule(std::size_t epoch, const TrainConfig& config);

/// L_data + (lambda/S) L_re + (lambda/S) L_ab; exactly L_data while lambda = 0.
double loss_total(double l_data, double l_re, double l_ab, const TrainConfig& config, std::size_t epoch);

struct LossWeights {
    double data = 1.0;
    double re = 0.0;
    double ab = 0.0;
};

LossWeights loss_weights(const TrainConfig& config, std::size_t epoch);

struct BatchLoss {
    double data = 0.0;
    double re = 0.0;
    double ab = 0.0;
    double weighted = 0.0;
};

/// Loss of a batch (normalized traces) and, when grad is non-empty, its
/// parameter gradient (overwritten). `inputs` may carry noise; `targets`
/// are the clean traces. Per-sample gradients are summed in sample order
/// whatever the worker count.
BatchLoss evaluate_batch(const Network& net, std::span<const double> params, const Batch& inputs,
                         const Batch& targets, const std::vector<const PhysicsTarget*>& physics_targets,
                         const PhysicsContext& ctx, const PhysicsPlan& plan, const LossWeights& weights,
                         std::span<double> grad);

struct EpochLog {
    std::size_t epoch = 0;
    double lambda = 0.0;
    double loss_data = 0.0;
    double loss_re = 0.0;
    double loss_ab = 0.0;
    double loss_total = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
};

/// Standard deviation of the additive input noise for normalized data with
/// the given RMS.
double noise_std(double normalized_rms, const TrainConfig& config);

/// Global-norm clipping (norm computed over all gradients). Returns the norm
/// before clipping.
double clip_gradient(std::span<double> grad, double max_norm);

/// Mini-batch Adam on normalized traces with input noise, global gradient
/// clipping and the ramped physics loss. Deterministic given config.seed.
TrainResult train(const std::vector<PulseTrace>& dataset, const PulseTrace& reference, const SampleGeometry& geometry,
                  const TrainConfig& config, const Architecture& arch = Architecture::standard());

// --- verification -------------------------------------------------------

enum class LossTerm { total, data, re, ab };

struct GradCheckOptions {
    double step = 1e-6;
    bool corrupt_analytic = false;  // harness self-test: perturbs one analytic entry
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t worst_parameter = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t parameters = 0;
};

/// Central finite differences against the analytic gradient for every
/// parameter; relative error uses max(|a|, |n|, 1e-8) as denominator.
GradCheckReport gradient_check(const Model& model, const Batch& batch, const TrainConfig& config, std::size_t epoch,
                               LossTerm term = LossTerm::total, const GradCheckOptions& options = {});

/// Reduced-scale model plus a small batch of forward-modelled pulses
/// (64 samples, in-band bins 2..10) for gradient verification.
struct GradCheckFixture {
    Model model;
    Batch batch;
};

/// Initialization seed of the default fixture: every ReLU stage is active
/// on the fixture batch, which keeps the smallest gradient entries above the
/// finite-difference rounding floor.
inline constexpr std::uint64_t kGradCheckSeed = 21;

GradCheckFixture reduced_fixture(std::uint64_t seed = kGradCheckSeed);

// --- imaging ------------------------------------------------------------

/// Latents of every pixel (row per pixel).
std::vector<std::vector<double>> encode_cube(const Model& model, const ScanCube& cube);

/// Latent coordinates sorted by decreasing variance over the given latents
/// (stable; ties keep index order).
std::vector<std::size_t> latent_order(const std::vector<std::vector<double>>& latents);

/// Maps of the index-th highest-variance latent coordinate. With several
/// cubes the ordering is computed over all of their pixels jointly.
std::vector<ScalarMap> latent_maps(const std::vector<const ScanCube*>& cubes, const Model& model, std::size_t index);
ScalarMap latent_map(const ScanCube& cube, const Model& model, std::size_t index);

// --- persistence --------------------------------------------------------

std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);
void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace thz::pcnn
