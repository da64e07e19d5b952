#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "thz/error.hpp"
#include "thz/fft.hpp"
#include "thz/parallel.hpp"
#include "thz/pcnn.hpp"

namespace thz::pcnn {

PhysicsContext PhysicsContext::from_reference(const PulseTrace& reference, std::size_t input_length,
                                              const SampleGeometry& geometry, const ExtractionOptions& options) {
    require(reference.size() == input_length, ErrorKind::dimension,
            "reference trace has " + std::to_string(reference.size()) + " samples, training traces have " +
                std::to_string(input_length));
    geometry.validate();
    PhysicsContext ctx{forward_transform(reference), geometry, options};
    const auto layout = band_layout(ctx.reference, options);
    require(!layout.bins.empty(), ErrorKind::no_band, "no spectral bins inside the physics-loss band");
    return ctx;
}

Model initialize(const Architecture& arch, const PhysicsContext& physics, std::uint64_t seed, double scale) {
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::input, "normalization scale must be positive");
    const ParameterLayout layout(arch);
    Model model{arch, std::vector<double>(layout.total, 0.0), scale, physics};
    std::mt19937_64 rng(seed);
    std::size_t fan_in = 1;
    for (const auto& t : layout.tensors) {
        if (t.shape.size() >= 2)
            fan_in = std::accumulate(t.shape.begin() + 1, t.shape.end(), std::size_t{1}, std::multiplies<>());
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < t.size; ++i) model.params[t.offset + i] = dist(rng);
    }
    return model;
}

namespace {

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) fail(ErrorKind::numeric, std::string("non-finite value in ") + what);
}

std::vector<double> normalized(std::span<const double> x, double scale) {
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out) v /= scale;
    return out;
}

}  // namespace

std::vector<double> encode(const Model& model, const PulseTrace& trace) {
    const Network net(model.arch);
    Network::Cache cache;
    const auto x = normalized(trace.samples(), model.scale);
    net.encode(model.params, x, cache);
    check_finite(cache.latent, "latent vector");
    return cache.latent;
}

std::vector<double> decode(const Model& model, std::span<const double> latent, std::size_t length) {
    const Network net(model.arch);
    Network::Cache cache;
    net.decode(model.params, latent, length == 0 ? model.arch.input_length : length, cache);
    check_finite(cache.output, "decoded trace");
    for (double& v : cache.output) v *= model.scale;
    return cache.output;
}

PulseTrace reconstruct(const Model& model, const PulseTrace& trace) {
    return PulseTrace(trace.dt(), trace.t0(), decode(model, encode(model, trace), trace.size()));
}

std::vector<std::vector<double>> encode_cube(const Model& model, const ScanCube& cube) {
    cube.validate();
    const Network net(model.arch);
    std::vector<std::vector<double>> latents(cube.pixel_count());
    parallel_for(latents.size(), [&](std::size_t i) {
        Network::Cache cache;
        net.encode(model.params, normalized(cube.pixel(i), model.scale), cache);
        check_finite(cache.latent, "latent vector");
        latents[i] = std::move(cache.latent);
    });
    return latents;
}

std::vector<std::size_t> latent_order(const std::vector<std::vector<double>>& latents) {
    require(!latents.empty(), ErrorKind::dimension, "no latent vectors to order");
    const std::size_t D = latents.front().size();
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    for (const auto& z : latents) {
        require(z.size() == D, ErrorKind::dimension, "latent vectors differ in size");
        for (std::size_t j = 0; j < D; ++j) mean[j] += z[j];
    }
    for (double& m : mean) m /= static_cast<double>(latents.size());
    for (const auto& z : latents)
        for (std::size_t j = 0; j < D; ++j) var[j] += (z[j] - mean[j]) * (z[j] - mean[j]);
    std::vector<std::size_t> order(D);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
    return order;
}

std::vector<ScalarMap> latent_maps(const std::vector<const ScanCube*>& cubes, const Model& model, std::size_t index) {
    require(!cubes.empty(), ErrorKind::dimension, "latent map needs at least one cube");
    require(index < model.arch.latent_dim, ErrorKind::index,
            "latent index " + std::to_string(index) + " out of range (latent size " +
                std::to_string(model.arch.latent_dim) + ")");
    std::vector<std::vector<std::vector<double>>> per_cube;
    std::vector<std::vector<double>> all;
    for (const ScanCube* cube : cubes) {
        per_cube.push_back(encode_cube(model, *cube));
        all.insert(all.end(), per_cube.back().begin(), per_cube.back().end());
    }
    const std::size_t coord = latent_order(all)[index];
    std::vector<ScalarMap> maps;
    for (std::size_t c = 0; c < cubes.size(); ++c) {
        ScalarMap map = ScalarMap::filled(cubes[c]->nx, cubes[c]->ny, 0.0);
        for (std::size_t i = 0; i < map.size(); ++i) map.values[i] = per_cube[c][i][coord];
        map.label = "latent " + std::to_string(index + 1) + " (coordinate " + std::to_string(coord) + ")";
        maps.push_back(std::move(map));
    }
    return maps;
}

ScalarMap latent_map(const ScanCube& cube, const Model& model, std::size_t index) {
    return std::move(latent_maps({&cube}, model, index).front());
}

}  // namespace thz::pcnn
