#include <algorithm>
#include <cmath>
#include <string>

#include "thz/error.hpp"
#include "thz/pcnn.hpp"

namespace thz::pcnn {

Architecture Architecture::reduced() {
    Architecture a;
    a.input_length = 64;
    a.channels = {1, 2, 2};
    a.pooled_length = 3;
    a.latent_dim = 4;
    return a;
}

std::size_t Architecture::conv_length(std::size_t in) const {
    if (in + 2 * padding < kernel) return 0;
    return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t Architecture::tconv_length(std::size_t in) const {
    if (in == 0 || (in - 1) * stride + kernel <= 2 * padding) return 0;
    return (in - 1) * stride + kernel - 2 * padding;
}

std::size_t Architecture::min_input_length() const {
    std::size_t need = 1;
    for (std::size_t s = 0; s < stages(); ++s) {
        need = (need - 1) * stride + kernel;
        need = need > 2 * padding ? need - 2 * padding : 1;
    }
    return need;
}

std::vector<std::size_t> Architecture::encoder_lengths(std::size_t input) const {
    std::vector<std::size_t> out{std::max(input, min_input_length())};
    for (std::size_t s = 0; s < stages(); ++s) out.push_back(conv_length(out.back()));
    return out;
}

std::vector<std::size_t> Architecture::decoder_lengths() const {
    std::vector<std::size_t> out{pooled_length};
    for (std::size_t s = 0; s < stages(); ++s) out.push_back(tconv_length(out.back()));
    return out;
}

void Architecture::validate() const {
    require(channels.size() >= 2, ErrorKind::model, "network needs at least one convolution stage");
    require(channels.front() == 1, ErrorKind::model, "network input must have one channel");
    for (std::size_t c : channels) require(c > 0, ErrorKind::model, "channel counts must be positive");
    require(kernel > 0 && stride > 0, ErrorKind::model, "kernel and stride must be positive");
    require(pooled_length > 0 && latent_dim > 0, ErrorKind::model, "pooled length and latent size must be positive");
    require(input_length >= 2, ErrorKind::model, "input length must be at least 2");
    for (std::size_t len : decoder_lengths())
        require(len > 0, ErrorKind::model, "decoder produces an empty output for this architecture");
}

ParameterLayout::ParameterLayout(const Architecture& arch) {
    arch.validate();
    auto add = [this](std::string name, std::vector<std::size_t> shape) {
        std::size_t size = 1;
        for (std::size_t d : shape) size *= d;
        tensors.push_back({std::move(name), std::move(shape), total, size});
        total += size;
    };
    const std::size_t S = arch.stages();
    const std::size_t k = arch.kernel;
    for (std::size_t s = 0; s < S; ++s) {
        add("enc" + std::to_string(s) + ".weight", {arch.channels[s + 1], arch.channels[s], k});
        add("enc" + std::to_string(s) + ".bias", {arch.channels[s + 1]});
    }
    const std::size_t flat = arch.bottleneck_channels() * arch.pooled_length;
    add("fc.weight", {arch.latent_dim, flat});
    add("fc.bias", {arch.latent_dim});
    add("dfc.weight", {flat, arch.latent_dim});
    add("dfc.bias", {flat});
    for (std::size_t j = 0; j < S; ++j) {
        add("dec" + std::to_string(j) + ".weight", {arch.channels[S - j], arch.channels[S - j - 1], k});
        add("dec" + std::to_string(j) + ".bias", {arch.channels[S - j - 1]});
    }
}

const TensorInfo& ParameterLayout::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    fail(ErrorKind::model, "no parameter tensor named " + name);
}

namespace {

struct ConvShape {
    std::size_t cin, cout, lin, lout, k, s, p;
};

// z = W * im2col(x) + b; W is [cout][cin*k].
void conv_forward(const double* W, const double* b, const double* x, const ConvShape& sh, double* z,
                  std::vector<double>& col) {
    const std::size_t rows = sh.cin * sh.k;
    col.assign(rows * sh.lout, 0.0);
    for (std::size_t i = 0; i < sh.cin; ++i)
        for (std::size_t j = 0; j < sh.k; ++j) {
            double* c = col.data() + (i * sh.k + j) * sh.lout;
            for (std::size_t t = 0; t < sh.lout; ++t) {
                const std::size_t pos = t * sh.s + j;
                if (pos >= sh.p && pos - sh.p < sh.lin) c[t] = x[i * sh.lin + pos - sh.p];
            }
        }
    for (std::size_t o = 0; o < sh.cout; ++o) {
        double* zo = z + o * sh.lout;
        std::fill(zo, zo + sh.lout, b[o]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double w = W[o * rows + r];
            const double* c = col.data() + r * sh.lout;
            for (std::size_t t = 0; t < sh.lout; ++t) zo[t] += w * c[t];
        }
    }
}

void conv_backward(const double* W, const double* x, const double* dz, const ConvShape& sh, double* dW, double* db,
                   double* dx, std::vector<double>& col, std::vector<double>& dcol) {
    const std::size_t rows = sh.cin * sh.k;
    col.assign(rows * sh.lout, 0.0);
    for (std::size_t i = 0; i < sh.cin; ++i)
        for (std::size_t j = 0; j < sh.k; ++j) {
            double* c = col.data() + (i * sh.k + j) * sh.lout;
            for (std::size_t t = 0; t < sh.lout; ++t) {
                const std::size_t pos = t * sh.s + j;
                if (pos >= sh.p && pos - sh.p < sh.lin) c[t] = x[i * sh.lin + pos - sh.p];
            }
        }
    for (std::size_t o = 0; o < sh.cout; ++o) {
        const double* g = dz + o * sh.lout;
        double acc = 0.0;
        for (std::size_t t = 0; t < sh.lout; ++t) acc += g[t];
        db[o] += acc;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* c = col.data() + r * sh.lout;
            double s = 0.0;
            for (std::size_t t = 0; t < sh.lout; ++t) s += g[t] * c[t];
            dW[o * rows + r] += s;
        }
    }
    if (!dx) return;
    dcol.assign(rows * sh.lout, 0.0);
    for (std::size_t o = 0; o < sh.cout; ++o) {
        const double* g = dz + o * sh.lout;
        for (std::size_t r = 0; r < rows; ++r) {
            const double w = W[o * rows + r];
            double* d = dcol.data() + r * sh.lout;
            for (std::size_t t = 0; t < sh.lout; ++t) d[t] += w * g[t];
        }
    }
    for (std::size_t i = 0; i < sh.cin; ++i)
        for (std::size_t j = 0; j < sh.k; ++j) {
            const double* d = dcol.data() + (i * sh.k + j) * sh.lout;
            for (std::size_t t = 0; t < sh.lout; ++t) {
                const std::size_t pos = t * sh.s + j;
                if (pos >= sh.p && pos - sh.p < sh.lin) dx[i * sh.lin + pos - sh.p] += d[t];
            }
        }
}

// Transposed convolution; W is [cin][cout*k].
void tconv_forward(const double* W, const double* b, const double* x, const ConvShape& sh, double* y,
                   std::vector<double>& cols) {
    const std::size_t rows = sh.cout * sh.k;
    cols.assign(rows * sh.lin, 0.0);
    for (std::size_t i = 0; i < sh.cin; ++i) {
        const double* xi = x + i * sh.lin;
        for (std::size_t r = 0; r < rows; ++r) {
            const double w = W[i * rows + r];
            double* c = cols.data() + r * sh.lin;
            for (std::size_t t = 0; t < sh.lin; ++t) c[t] += w * xi[t];
        }
    }
    for (std::size_t o = 0; o < sh.cout; ++o) {
        double* yo = y + o * sh.lout;
        std::fill(yo, yo + sh.lout, b[o]);
        for (std::size_t j = 0; j < sh.k; ++j) {
            const double* c = cols.data() + (o * sh.k + j) * sh.lin;
            for (std::size_t t = 0; t < sh.lin; ++t) {
                const std::size_t pos = t * sh.s + j;
                if (pos >= sh.p && pos - sh.p < sh.lout) yo[pos - sh.p] += c[t];
            }
        }
    }
}

void tconv_backward(const double* W, const double* x, const double* dy, const ConvShape& sh, double* dW, double* db,
                    double* dx, std::vector<double>& dcols) {
    const std::size_t rows = sh.cout * sh.k;
    dcols.assign(rows * sh.lin, 0.0);
    for (std::size_t o = 0; o < sh.cout; ++o) {
        const double* g = dy + o * sh.lout;
        double acc = 0.0;
        for (std::size_t t = 0; t < sh.lout; ++t) acc += g[t];
        db[o] += acc;
        for (std::size_t j = 0; j < sh.k; ++j) {
            double* d = dcols.data() + (o * sh.k + j) * sh.lin;
            for (std::size_t t = 0; t < sh.lin; ++t) {
                const std::size_t pos = t * sh.s + j;
                if (pos >= sh.p && pos - sh.p < sh.lout) d[t] = g[pos - sh.p];
            }
        }
    }
    for (std::size_t i = 0; i < sh.cin; ++i) {
        const double* xi = x + i * sh.lin;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* d = dcols.data() + r * sh.lin;
            double s = 0.0;
            for (std::size_t t = 0; t < sh.lin; ++t) s += xi[t] * d[t];
            dW[i * rows + r] += s;
        }
    }
    if (!dx) return;
    for (std::size_t i = 0; i < sh.cin; ++i) {
        double* dxi = dx + i * sh.lin;
        for (std::size_t r = 0; r < rows; ++r) {
            const double w = W[i * rows + r];
            const double* d = dcols.data() + r * sh.lin;
            for (std::size_t t = 0; t < sh.lin; ++t) dxi[t] += w * d[t];
        }
    }
}

struct PoolRange {
    std::size_t begin, end;
};

PoolRange pool_range(std::size_t q, std::size_t in, std::size_t out) {
    const std::size_t begin = (q * in) / out;
    const std::size_t end = ((q + 1) * in + out - 1) / out;
    return {begin, end};
}

struct InterpTap {
    std::size_t i0, i1;
    double w;
};

// Linear interpolation with half-pixel centres, source index clamped at 0.
InterpTap interp_tap(std::size_t i, std::size_t in, std::size_t out) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    return {i0, i1, src - static_cast<double>(i0)};
}

void relu(std::vector<double>& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_mask(const std::vector<double>& activated, std::vector<double>& grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(activated[i] > 0.0)) grad[i] = 0.0;
}

}  // namespace

Network::Network(Architecture arch) : arch_(std::move(arch)), layout_(arch_) {}

void Network::encode(std::span<const double> params, std::span<const double> x, Cache& cache) const {
    require(params.size() == layout_.total, ErrorKind::dimension, "parameter vector has the wrong size");
    require(!x.empty(), ErrorKind::dimension, "cannot encode an empty trace");
    const auto& a = arch_;
    const std::size_t S = a.stages();
    const auto lengths = a.encoder_lengths(x.size());
    cache.input_length = x.size();
    cache.enc.resize(S + 1);
    cache.enc[0].assign(lengths[0], 0.0);
    std::copy(x.begin(), x.end(), cache.enc[0].begin());

    std::vector<double> col;
    for (std::size_t s = 0; s < S; ++s) {
        const ConvShape sh{a.channels[s], a.channels[s + 1], lengths[s], lengths[s + 1], a.kernel, a.stride, a.padding};
        const auto& W = layout_.tensors[2 * s];
        const auto& b = layout_.tensors[2 * s + 1];
        cache.enc[s + 1].assign(sh.cout * sh.lout, 0.0);
        conv_forward(params.data() + W.offset, params.data() + b.offset, cache.enc[s].data(), sh,
                     cache.enc[s + 1].data(), col);
        relu(cache.enc[s + 1]);
    }

    const std::size_t C = a.bottleneck_channels();
    const std::size_t Lb = lengths[S];
    const std::size_t P = a.pooled_length;
    cache.pooled.assign(C * P, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t q = 0; q < P; ++q) {
            const auto r = pool_range(q, Lb, P);
            double acc = 0.0;
            for (std::size_t t = r.begin; t < r.end; ++t) acc += cache.enc[S][c * Lb + t];
            cache.pooled[c * P + q] = acc / static_cast<double>(r.end - r.begin);
        }

    const auto& fw = layout_.get("fc.weight");
    const auto& fb = layout_.get("fc.bias");
    const std::size_t flat = C * P;
    cache.latent.assign(a.latent_dim, 0.0);
    for (std::size_t o = 0; o < a.latent_dim; ++o) {
        double acc = params[fb.offset + o];
        const double* w = params.data() + fw.offset + o * flat;
        for (std::size_t i = 0; i < flat; ++i) acc += w[i] * cache.pooled[i];
        cache.latent[o] = acc;
    }
}

void Network::decode(std::span<const double> params, std::span<const double> latent, std::size_t out_length,
                     Cache& cache) const {
    require(params.size() == layout_.total, ErrorKind::dimension, "parameter vector has the wrong size");
    require(latent.size() == arch_.latent_dim, ErrorKind::dimension,
            "latent vector must have " + std::to_string(arch_.latent_dim) + " entries");
    require(out_length >= 1, ErrorKind::dimension, "decoded length must be positive");
    const auto& a = arch_;
    const std::size_t S = a.stages();
    const std::size_t C = a.bottleneck_channels();
    const std::size_t P = a.pooled_length;
    const std::size_t flat = C * P;
    const auto lengths = a.decoder_lengths();
    if (cache.latent.data() != latent.data()) cache.latent.assign(latent.begin(), latent.end());

    const auto& dw = layout_.get("dfc.weight");
    const auto& db = layout_.get("dfc.bias");
    cache.dec.resize(S + 1);
    cache.dec[0].assign(flat, 0.0);
    for (std::size_t o = 0; o < flat; ++o) {
        double acc = params[db.offset + o];
        const double* w = params.data() + dw.offset + o * a.latent_dim;
        for (std::size_t i = 0; i < a.latent_dim; ++i) acc += w[i] * cache.latent[i];
        cache.dec[0][o] = acc;
    }
    relu(cache.dec[0]);

    const std::size_t first_dec = 2 * S + 4;
    std::vector<double> cols;
    for (std::size_t j = 0; j < S; ++j) {
        const ConvShape sh{a.channels[S - j], a.channels[S - j - 1], lengths[j], lengths[j + 1],
                           a.kernel,          a.stride,              a.padding};
        const auto& W = layout_.tensors[first_dec + 2 * j];
        const auto& b = layout_.tensors[first_dec + 2 * j + 1];
        cache.dec[j + 1].assign(sh.cout * sh.lout, 0.0);
        tconv_forward(params.data() + W.offset, params.data() + b.offset, cache.dec[j].data(), sh,
                      cache.dec[j + 1].data(), cols);
        if (j + 1 < S) relu(cache.dec[j + 1]);
    }

    const std::size_t M = lengths[S];
    cache.output.assign(out_length, 0.0);
    const auto& y = cache.dec[S];
    for (std::size_t i = 0; i < out_length; ++i) {
        const auto tap = interp_tap(i, M, out_length);
        cache.output[i] = (1.0 - tap.w) * y[tap.i0] + tap.w * y[tap.i1];
    }
}

void Network::forward(std::span<const double> params, std::span<const double> x, Cache& cache) const {
    encode(params, x, cache);
    decode(params, cache.latent, x.size(), cache);
}

void Network::backward(std::span<const double> params, const Cache& cache, std::span<const double> grad_output,
                       std::span<double> grad) const {
    require(grad.size() == layout_.total, ErrorKind::dimension, "gradient vector has the wrong size");
    require(grad_output.size() == cache.output.size(), ErrorKind::dimension, "output gradient has the wrong size");
    const auto& a = arch_;
    const std::size_t S = a.stages();
    const std::size_t C = a.bottleneck_channels();
    const std::size_t P = a.pooled_length;
    const std::size_t flat = C * P;
    const auto dec_len = a.decoder_lengths();
    const auto enc_len = a.encoder_lengths(cache.input_length);
    const std::size_t first_dec = 2 * S + 4;

    // interpolation
    const std::size_t M = dec_len[S];
    std::vector<double> g(M, 0.0);
    for (std::size_t i = 0; i < grad_output.size(); ++i) {
        const auto tap = interp_tap(i, M, grad_output.size());
        g[tap.i0] += (1.0 - tap.w) * grad_output[i];
        g[tap.i1] += tap.w * grad_output[i];
    }

    std::vector<double> scratch, scratch2;
    for (std::size_t jj = S; jj-- > 0;) {
        const ConvShape sh{a.channels[S - jj], a.channels[S - jj - 1], dec_len[jj], dec_len[jj + 1],
                           a.kernel,           a.stride,               a.padding};
        if (jj + 1 < S) relu_mask(cache.dec[jj + 1], g);
        const auto& W = layout_.tensors[first_dec + 2 * jj];
        const auto& b = layout_.tensors[first_dec + 2 * jj + 1];
        std::vector<double> gin(sh.cin * sh.lin, 0.0);
        tconv_backward(params.data() + W.offset, cache.dec[jj].data(), g.data(), sh, grad.data() + W.offset,
                       grad.data() + b.offset, gin.data(), scratch);
        g = std::move(gin);
    }

    // decoder FC
    relu_mask(cache.dec[0], g);
    const auto& dw = layout_.get("dfc.weight");
    const auto& db = layout_.get("dfc.bias");
    std::vector<double> glat(a.latent_dim, 0.0);
    for (std::size_t o = 0; o < flat; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        grad[db.offset + o] += go;
        double* gw = grad.data() + dw.offset + o * a.latent_dim;
        const double* w = params.data() + dw.offset + o * a.latent_dim;
        for (std::size_t i = 0; i < a.latent_dim; ++i) {
            gw[i] += go * cache.latent[i];
            glat[i] += go * w[i];
        }
    }

    // encoder FC
    const auto& fw = layout_.get("fc.weight");
    const auto& fb = layout_.get("fc.bias");
    std::vector<double> gpool(flat, 0.0);
    for (std::size_t o = 0; o < a.latent_dim; ++o) {
        const double go = glat[o];
        grad[fb.offset + o] += go;
        double* gw = grad.data() + fw.offset + o * flat;
        const double* w = params.data() + fw.offset + o * flat;
        for (std::size_t i = 0; i < flat; ++i) {
            gw[i] += go * cache.pooled[i];
            gpool[i] += go * w[i];
        }
    }

    // pooling
    const std::size_t Lb = enc_len[S];
    g.assign(C * Lb, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t q = 0; q < P; ++q) {
            const auto r = pool_range(q, Lb, P);
            const double share = gpool[c * P + q] / static_cast<double>(r.end - r.begin);
            for (std::size_t t = r.begin; t < r.end; ++t) g[c * Lb + t] += share;
        }

    for (std::size_t s = S; s-- > 0;) {
        relu_mask(cache.enc[s + 1], g);
        const ConvShape sh{a.channels[s], a.channels[s + 1], enc_len[s], enc_len[s + 1], a.kernel, a.stride, a.padding};
        const auto& W = layout_.tensors[2 * s];
        const auto& b = layout_.tensors[2 * s + 1];
        std::vector<double> gin;
        if (s > 0) gin.assign(sh.cin * sh.lin, 0.0);
        conv_backward(params.data() + W.offset, cache.enc[s].data(), g.data(), sh, grad.data() + W.offset,
                      grad.data() + b.offset, s > 0 ? gin.data() : nullptr, scratch, scratch2);
        g = std::move(gin);
    }
}

}  // namespace thz::pcnn
