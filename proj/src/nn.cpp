#include "seil/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>

#include "seil/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seil::nn {

namespace {

constexpr int kChunk = 128; // batch tile width for stack accumulators

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_batch(int B) {
    if (B <= 0) throw std::invalid_argument("batch width must be positive");
}

} // namespace

// ---------------------------------------------------------------------------
// Parameter construction

void add_mlp_params(ParamSet& ps, const MlpSpec& spec) {
    if (spec.dims.size() < 2) throw std::invalid_argument("MlpSpec needs >= 2 dims");
    for (int i = 0; i < spec.layer_count(); ++i) {
        ps.add(spec.prefix + ".w" + std::to_string(i),
               Tensor({spec.dims[i + 1], spec.dims[i]}));
        ps.add(spec.prefix + ".b" + std::to_string(i), Tensor({spec.dims[i + 1]}));
    }
}

void add_lstm_params(ParamSet& ps, const LstmSpec& spec) {
    for (int l = 0; l < spec.layers; ++l) {
        const int d = l == 0 ? spec.input_dim : spec.hidden;
        ps.add(spec.prefix + ".w" + std::to_string(l),
               Tensor({4 * spec.hidden, spec.hidden + d}));
        ps.add(spec.prefix + ".b" + std::to_string(l), Tensor({4 * spec.hidden}));
    }
}

namespace {

void fill_xavier(Tensor& w, int fan_in, int fan_out, rng::SplitMix& stream) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (float& v : w.data) v = static_cast<float>(stream.next_sym(bound));
}

} // namespace

void init_mlp_params(ParamSet& ps, const MlpSpec& spec, rng::SplitMix& stream) {
    for (int i = 0; i < spec.layer_count(); ++i) {
        Tensor& w = ps.at(spec.prefix + ".w" + std::to_string(i));
        fill_xavier(w, spec.dims[i], spec.dims[i + 1], stream);
        ps.at(spec.prefix + ".b" + std::to_string(i)).fill(0.0f);
    }
}

void init_lstm_params(ParamSet& ps, const LstmSpec& spec, rng::SplitMix& stream) {
    for (int l = 0; l < spec.layers; ++l) {
        const int d = l == 0 ? spec.input_dim : spec.hidden;
        Tensor& w = ps.at(spec.prefix + ".w" + std::to_string(l));
        fill_xavier(w, spec.hidden + d, spec.hidden, stream);
        Tensor& b = ps.at(spec.prefix + ".b" + std::to_string(l));
        b.fill(0.0f);
        for (int h = spec.hidden; h < 2 * spec.hidden; ++h) b.data[h] = 1.0f; // forget gate
    }
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

inline void gemm_wx_row(const float* W, const float* bias, const float* X, float* Z, int r,
                        int cols, int B) {
    for (int b0 = 0; b0 < B; b0 += kChunk) {
        const int bn = std::min(kChunk, B - b0);
        double acc[kChunk];
        const double init = bias ? static_cast<double>(bias[r]) : 0.0;
        for (int b = 0; b < bn; ++b) acc[b] = init;
        const float* wrow = W + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            const double w = wrow[c];
            const float* xrow = X + static_cast<std::size_t>(c) * B + b0;
            for (int b = 0; b < bn; ++b) acc[b] += w * xrow[b];
        }
        float* zrow = Z + static_cast<std::size_t>(r) * B + b0;
        for (int b = 0; b < bn; ++b) zrow[b] = static_cast<float>(acc[b]);
    }
}

inline void gemm_wt_dz_row(const float* Wt, const float* dZ, float* dX, int c, int rows,
                           int B) {
    for (int b0 = 0; b0 < B; b0 += kChunk) {
        const int bn = std::min(kChunk, B - b0);
        double acc[kChunk] = {};
        const float* wtrow = Wt + static_cast<std::size_t>(c) * rows;
        for (int r = 0; r < rows; ++r) {
            const double w = wtrow[r];
            const float* dzrow = dZ + static_cast<std::size_t>(r) * B + b0;
            for (int b = 0; b < bn; ++b) acc[b] += w * dzrow[b];
        }
        float* dxrow = dX + static_cast<std::size_t>(c) * B + b0;
        for (int b = 0; b < bn; ++b) dxrow[b] = static_cast<float>(acc[b]);
    }
}

inline void gemm_dw_row(const float* dZ, const float* X, double* dW, double* db, int r,
                        int cols, int B) {
    const float* dzrow = dZ + static_cast<std::size_t>(r) * B;
    double* dwrow = dW + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
        const float* xrow = X + static_cast<std::size_t>(c) * B;
        double s = 0.0;
        for (int b = 0; b < B; ++b) s += static_cast<double>(dzrow[b]) * xrow[b];
        dwrow[c] += s;
    }
    double s = 0.0;
    for (int b = 0; b < B; ++b) s += dzrow[b];
    db[r] += s;
}

} // namespace

void gemm_wx_serial(const float* W, const float* bias, const float* X, float* Z, int rows,
                    int cols, int B) {
    check_batch(B);
    for (int r = 0; r < rows; ++r) gemm_wx_row(W, bias, X, Z, r, cols, B);
}

void gemm_wx_parallel(const float* W, const float* bias, const float* X, float* Z, int rows,
                      int cols, int B) {
    check_batch(B);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(par::max_threads())
#endif
    for (int r = 0; r < rows; ++r) gemm_wx_row(W, bias, X, Z, r, cols, B);
}

void gemm_wx(const float* W, const float* bias, const float* X, float* Z, int rows, int cols,
             int B) {
    if (par::max_threads() > 1 && rows >= 32)
        gemm_wx_parallel(W, bias, X, Z, rows, cols, B);
    else
        gemm_wx_serial(W, bias, X, Z, rows, cols, B);
}

void gemm_wt_dz_serial(const float* Wt, const float* dZ, float* dX, int cols, int rows,
                       int B) {
    check_batch(B);
    for (int c = 0; c < cols; ++c) gemm_wt_dz_row(Wt, dZ, dX, c, rows, B);
}

void gemm_wt_dz_parallel(const float* Wt, const float* dZ, float* dX, int cols, int rows,
                         int B) {
    check_batch(B);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(par::max_threads())
#endif
    for (int c = 0; c < cols; ++c) gemm_wt_dz_row(Wt, dZ, dX, c, rows, B);
}

void gemm_wt_dz(const float* Wt, const float* dZ, float* dX, int cols, int rows, int B) {
    if (par::max_threads() > 1 && cols >= 32)
        gemm_wt_dz_parallel(Wt, dZ, dX, cols, rows, B);
    else
        gemm_wt_dz_serial(Wt, dZ, dX, cols, rows, B);
}

void gemm_dw_acc_serial(const float* dZ, const float* X, double* dW, double* db, int rows,
                        int cols, int B) {
    check_batch(B);
    for (int r = 0; r < rows; ++r) gemm_dw_row(dZ, X, dW, db, r, cols, B);
}

void gemm_dw_acc_parallel(const float* dZ, const float* X, double* dW, double* db, int rows,
                          int cols, int B) {
    check_batch(B);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(par::max_threads())
#endif
    for (int r = 0; r < rows; ++r) gemm_dw_row(dZ, X, dW, db, r, cols, B);
}

void gemm_dw_acc(const float* dZ, const float* X, double* dW, double* db, int rows, int cols,
                 int B) {
    if (par::max_threads() > 1 && rows >= 32)
        gemm_dw_acc_parallel(dZ, X, dW, db, rows, cols, B);
    else
        gemm_dw_acc_serial(dZ, X, dW, db, rows, cols, B);
}

void transpose(const float* W, float* Wt, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            Wt[static_cast<std::size_t>(c) * rows + r] =
                W[static_cast<std::size_t>(r) * cols + c];
}

// ---------------------------------------------------------------------------
// GradAccum

void GradAccum::init(const ParamSet& ps) {
    g.clear();
    g.reserve(ps.size());
    for (const Tensor& t : ps.values)
        g.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
}

void GradAccum::clear() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

void GradAccum::scale_to(double scale, ParamSet& grads) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto& out = grads.values[i].data;
        for (std::size_t j = 0; j < g[i].size(); ++j)
            out[j] = static_cast<float>(scale * g[i][j]);
    }
}

// ---------------------------------------------------------------------------
// MLP

namespace {

Act layer_act(const MlpSpec& spec, int layer) {
    return layer + 1 < spec.layer_count() ? Act::kRelu : spec.final_act;
}

} // namespace

void mlp_forward_batch(const ParamSet& ps, const MlpSpec& spec, const float* X, int B,
                       float* Y, MlpCache* cache) {
    check_batch(B);
    const int n_layers = spec.layer_count();
    std::vector<std::vector<float>> acts(static_cast<std::size_t>(n_layers) + 1);
    acts[0].assign(X, X + static_cast<std::size_t>(spec.dims[0]) * B);
    for (int i = 0; i < n_layers; ++i) {
        const Tensor& w = ps.at(spec.prefix + ".w" + std::to_string(i));
        const Tensor& b = ps.at(spec.prefix + ".b" + std::to_string(i));
        acts[i + 1].resize(static_cast<std::size_t>(spec.dims[i + 1]) * B);
        gemm_wx(w.data.data(), b.data.data(), acts[i].data(), acts[i + 1].data(),
                spec.dims[i + 1], spec.dims[i], B);
        if (layer_act(spec, i) == Act::kRelu)
            for (float& v : acts[i + 1])
                if (v < 0.0f) v = 0.0f;
    }
    std::memcpy(Y, acts.back().data(), acts.back().size() * sizeof(float));
    if (cache) {
        cache->B = B;
        cache->acts = std::move(acts);
    }
}

void mlp_backward_batch(const ParamSet& ps, const MlpSpec& spec, const MlpCache& cache,
                        const float* dY, GradAccum& grads, float* dX) {
    const int B = cache.B;
    const int n_layers = spec.layer_count();
    std::vector<float> dZ(dY, dY + static_cast<std::size_t>(spec.dims.back()) * B);
    std::vector<float> dprev;
    std::vector<float> wt;
    for (int i = n_layers - 1; i >= 0; --i) {
        const std::vector<float>& out = cache.acts[static_cast<std::size_t>(i) + 1];
        if (layer_act(spec, i) == Act::kRelu)
            for (std::size_t j = 0; j < dZ.size(); ++j)
                if (out[j] <= 0.0f) dZ[j] = 0.0f;
        const int wi = ps.index_of(spec.prefix + ".w" + std::to_string(i));
        const int bi = ps.index_of(spec.prefix + ".b" + std::to_string(i));
        const Tensor& w = ps.values[static_cast<std::size_t>(wi)];
        gemm_dw_acc(dZ.data(), cache.acts[static_cast<std::size_t>(i)].data(),
                    grads.of(static_cast<std::size_t>(wi)),
                    grads.of(static_cast<std::size_t>(bi)), spec.dims[i + 1], spec.dims[i],
                    B);
        const bool need_dx = i > 0 || dX != nullptr;
        if (!need_dx) break;
        wt.resize(w.data.size());
        transpose(w.data.data(), wt.data(), spec.dims[i + 1], spec.dims[i]);
        dprev.resize(static_cast<std::size_t>(spec.dims[i]) * B);
        gemm_wt_dz(wt.data(), dZ.data(), dprev.data(), spec.dims[i], spec.dims[i + 1], B);
        dZ.swap(dprev);
    }
    if (dX) std::memcpy(dX, dZ.data(), static_cast<std::size_t>(spec.dims[0]) * B * sizeof(float));
}

std::vector<float> mlp_forward(const ParamSet& ps, const MlpSpec& spec,
                               const std::vector<float>& x) {
    if (static_cast<int>(x.size()) != spec.input_dim())
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    std::vector<float> y(static_cast<std::size_t>(spec.output_dim()));
    mlp_forward_batch(ps, spec, x.data(), 1, y.data(), nullptr);
    return y;
}

// ---------------------------------------------------------------------------
// LSTM cell

void lstm_cell_forward(const float* W, const float* b, int H, int D, int n, const float* hx,
                       const float* c_prev, float* gates, float* c_out, float* tanh_c,
                       float* h_out) {
    gemm_wx(W, b, hx, gates, 4 * H, H + D, n);
    const float* gi = gates;
    float* gf = gates + static_cast<std::size_t>(H) * n;
    float* go = gates + 2 * static_cast<std::size_t>(H) * n;
    float* gg = gates + 3 * static_cast<std::size_t>(H) * n;
    for (std::size_t j = 0; j < static_cast<std::size_t>(H) * n; ++j) {
        const double i = sigmoid(gi[j]);
        const double f = sigmoid(gf[j]);
        const double o = sigmoid(go[j]);
        const double g = std::tanh(static_cast<double>(gg[j]));
        gates[j] = static_cast<float>(i);
        gf[j] = static_cast<float>(f);
        go[j] = static_cast<float>(o);
        gg[j] = static_cast<float>(g);
        const double c = f * c_prev[j] + i * g;
        c_out[j] = static_cast<float>(c);
        const double tc = std::tanh(c);
        tanh_c[j] = static_cast<float>(tc);
        h_out[j] = static_cast<float>(o * tc);
    }
}

void lstm_cell_backward(const float* Wt, int H, int D, int n, const float* hx,
                        const float* c_prev, const float* gates, const float* c_out,
                        const float* tanh_c, const float* dh, const float* dc_in, double* dW,
                        double* db, float* dhx, float* dc_prev) {
    (void)c_out;
    const std::size_t hn = static_cast<std::size_t>(H) * n;
    const float* gi = gates;
    const float* gf = gates + hn;
    const float* go = gates + 2 * hn;
    const float* gg = gates + 3 * hn;
    std::vector<float> dz(4 * hn);
    for (std::size_t j = 0; j < hn; ++j) {
        const double i = gi[j], f = gf[j], o = go[j], g = gg[j];
        const double tc = tanh_c[j];
        const double dhj = dh[j];
        const double dc = (dc_in ? dc_in[j] : 0.0) + dhj * o * (1.0 - tc * tc);
        dz[j] = static_cast<float>(dc * g * i * (1.0 - i));
        dz[hn + j] = static_cast<float>(dc * c_prev[j] * f * (1.0 - f));
        dz[2 * hn + j] = static_cast<float>(dhj * tc * o * (1.0 - o));
        dz[3 * hn + j] = static_cast<float>(dc * i * (1.0 - g * g));
        dc_prev[j] = static_cast<float>(dc * f);
    }
    gemm_dw_acc(dz.data(), hx, dW, db, 4 * H, H + D, n);
    gemm_wt_dz(Wt, dz.data(), dhx, H + D, 4 * H, n);
}

// ---------------------------------------------------------------------------
// LSTM over a single sequence

std::vector<float> lstm_forward(const ParamSet& ps, const LstmSpec& spec,
                                const std::vector<std::vector<float>>& inputs,
                                LstmCache* cache) {
    if (inputs.empty()) throw std::invalid_argument("lstm_forward: empty sequence");
    const int H = spec.hidden;
    const int T = static_cast<int>(inputs.size());
    std::vector<std::vector<float>> h(static_cast<std::size_t>(spec.layers),
                                      std::vector<float>(static_cast<std::size_t>(H), 0.0f));
    std::vector<std::vector<float>> c = h;
    if (cache) {
        cache->T = T;
        cache->hx.assign(static_cast<std::size_t>(T), {});
        cache->gates.assign(static_cast<std::size_t>(T), {});
        cache->c.assign(static_cast<std::size_t>(T), {});
        cache->tanh_c.assign(static_cast<std::size_t>(T), {});
    }
    for (int t = 0; t < T; ++t) {
        const std::vector<float>* x = &inputs[static_cast<std::size_t>(t)];
        if (static_cast<int>(x->size()) != spec.input_dim)
            throw std::invalid_argument("lstm_forward: step dimension mismatch");
        if (cache) {
            cache->hx[t].resize(static_cast<std::size_t>(spec.layers));
            cache->gates[t].resize(static_cast<std::size_t>(spec.layers));
            cache->c[t].resize(static_cast<std::size_t>(spec.layers));
            cache->tanh_c[t].resize(static_cast<std::size_t>(spec.layers));
        }
        for (int l = 0; l < spec.layers; ++l) {
            const int d = l == 0 ? spec.input_dim : H;
            const Tensor& w = ps.at(spec.prefix + ".w" + std::to_string(l));
            const Tensor& b = ps.at(spec.prefix + ".b" + std::to_string(l));
            std::vector<float> hx(static_cast<std::size_t>(H + d));
            std::copy(h[l].begin(), h[l].end(), hx.begin());
            std::copy(x->begin(), x->end(), hx.begin() + H);
            std::vector<float> gates(4 * static_cast<std::size_t>(H));
            std::vector<float> c_new(static_cast<std::size_t>(H));
            std::vector<float> tc(static_cast<std::size_t>(H));
            lstm_cell_forward(w.data.data(), b.data.data(), H, d, 1, hx.data(),
                              c[l].data(), gates.data(), c_new.data(), tc.data(),
                              h[l].data());
            c[l] = c_new;
            if (cache) {
                cache->hx[t][l] = std::move(hx);
                cache->gates[t][l] = std::move(gates);
                cache->c[t][l] = c[l];
                cache->tanh_c[t][l] = std::move(tc);
            }
            x = &h[l];
        }
    }
    return h.back();
}

void lstm_backward(const ParamSet& ps, const LstmSpec& spec, const LstmCache& cache,
                   const std::vector<float>& d_final_h, GradAccum& grads, float* dX) {
    const int H = spec.hidden;
    const int T = cache.T;
    std::vector<std::vector<float>> wt(static_cast<std::size_t>(spec.layers));
    for (int l = 0; l < spec.layers; ++l) {
        const int d = l == 0 ? spec.input_dim : H;
        const Tensor& w = ps.at(spec.prefix + ".w" + std::to_string(l));
        wt[l].resize(w.data.size());
        transpose(w.data.data(), wt[l].data(), 4 * H, H + d);
    }
    std::vector<std::vector<float>> dh_next(static_cast<std::size_t>(spec.layers),
                                            std::vector<float>(static_cast<std::size_t>(H), 0.0f));
    std::vector<std::vector<float>> dc_next = dh_next;
    dh_next.back() = d_final_h;
    std::vector<float> zeros(static_cast<std::size_t>(H), 0.0f);
    for (int t = T - 1; t >= 0; --t) {
        std::vector<float> dx_from_above; // gradient into layer l-1's h_t
        for (int l = spec.layers - 1; l >= 0; --l) {
            const int d = l == 0 ? spec.input_dim : H;
            std::vector<float> dh = dh_next[l];
            if (l + 1 < spec.layers)
                for (int j = 0; j < H; ++j) dh[j] += dx_from_above[j];
            const float* c_prev = t > 0 ? cache.c[t - 1][l].data() : zeros.data();
            const int wi = ps.index_of(spec.prefix + ".w" + std::to_string(l));
            const int bi = ps.index_of(spec.prefix + ".b" + std::to_string(l));
            std::vector<float> dhx(static_cast<std::size_t>(H + d));
            lstm_cell_backward(wt[l].data(), H, d, 1, cache.hx[t][l].data(), c_prev,
                               cache.gates[t][l].data(), cache.c[t][l].data(),
                               cache.tanh_c[t][l].data(), dh.data(), dc_next[l].data(),
                               grads.of(static_cast<std::size_t>(wi)),
                               grads.of(static_cast<std::size_t>(bi)), dhx.data(),
                               dc_next[l].data());
            std::copy(dhx.begin(), dhx.begin() + H, dh_next[l].begin());
            if (l > 0) {
                dx_from_above.assign(dhx.begin() + H, dhx.end());
            } else if (dX) {
                float* out = dX + static_cast<std::size_t>(t) * spec.input_dim;
                for (int j = 0; j < spec.input_dim; ++j) out[j] = dhx[H + j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Losses

double mse_loss(const float* pred, const float* target, int D, int B, float* dpred) {
    check_batch(B);
    const std::size_t n = static_cast<std::size_t>(D) * B;
    double acc = 0.0;
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double e = static_cast<double>(pred[j]) - target[j];
        acc += e * e;
        if (dpred) dpred[j] = static_cast<float>(2.0 * e * scale);
    }
    return acc * scale;
}

double cross_entropy_loss(const float* logits, const int* labels, int L, int B,
                          float* dlogits) {
    check_batch(B);
    double acc = 0.0;
    std::vector<double> p(static_cast<std::size_t>(L));
    for (int b = 0; b < B; ++b) {
        double m = logits[b];
        for (int l = 1; l < L; ++l)
            m = std::max(m, static_cast<double>(logits[static_cast<std::size_t>(l) * B + b]));
        double z = 0.0;
        for (int l = 0; l < L; ++l) {
            p[l] = std::exp(static_cast<double>(logits[static_cast<std::size_t>(l) * B + b]) - m);
            z += p[l];
        }
        const int y = labels[b];
        if (y < 0 || y >= L) throw std::invalid_argument("cross_entropy_loss: bad label");
        acc += std::log(z) + m - logits[static_cast<std::size_t>(y) * B + b];
        if (dlogits)
            for (int l = 0; l < L; ++l)
                dlogits[static_cast<std::size_t>(l) * B + b] =
                    static_cast<float>((p[l] / z - (l == y ? 1.0 : 0.0)) / B);
    }
    return acc / B;
}

std::vector<double> softmax(const std::vector<float>& logits) {
    std::vector<double> p(logits.size());
    double m = logits.empty() ? 0.0 : logits[0];
    for (float v : logits) m = std::max(m, static_cast<double>(v));
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// ---------------------------------------------------------------------------
// Adam and EMA

void adam_step(ParamSet& ps, const ParamSet& grads, const AdamConfig& cfg) {
    if (!ps.has_adam()) throw std::logic_error("adam_step: optimizer state missing");
    if (grads.size() != ps.size()) throw std::logic_error("adam_step: grad/param mismatch");
    ps.adam_step += 1;
    const double t = static_cast<double>(ps.adam_step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        float* w = ps.values[i].data.data();
        float* m = ps.adam_m[i].data.data();
        float* v = ps.adam_v[i].data.data();
        const float* g = grads.values[i].data.data();
        const std::size_t n = ps.values[i].data.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double update = cfg.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
            w[j] = static_cast<float>(w[j] - update);
        }
    }
}

void ema_update(ParamSet& ps, float tau) {
    if (!ps.has_ema()) throw std::logic_error("ema_update: shadow missing");
    const double t = tau;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        float* s = ps.ema[i].data.data();
        const float* w = ps.values[i].data.data();
        const std::size_t n = ps.values[i].data.size();
        for (std::size_t j = 0; j < n; ++j)
            s[j] = static_cast<float>(t * s[j] + (1.0 - t) * w[j]);
    }
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

struct GradCheckCase {
    std::string name;
    ParamSet params;
    // Returns the loss; fills grads when grads != nullptr.
    std::function<double(const ParamSet&, GradAccum*)> eval;
};

double max_rel_err_for_case(GradCheckCase& cs, double eps, std::string* worst) {
    GradAccum acc;
    acc.init(cs.params);
    cs.eval(cs.params, &acc);
    double worst_err = 0.0;
    for (std::size_t i = 0; i < cs.params.size(); ++i) {
        auto& data = cs.params.values[i].data;
        for (std::size_t j = 0; j < data.size(); ++j) {
            const float orig = data[j];
            const float wp = static_cast<float>(static_cast<double>(orig) + eps);
            const float wm = static_cast<float>(static_cast<double>(orig) - eps);
            data[j] = wp;
            const double fp = cs.eval(cs.params, nullptr);
            data[j] = wm;
            const double fm = cs.eval(cs.params, nullptr);
            data[j] = orig;
            const double actual_eps = (static_cast<double>(wp) - wm) / 2.0;
            const double fd = (fp - fm) / (2.0 * actual_eps);
            const double an = acc.g[i][j];
            const double err = std::abs(an - fd) / std::max(1.0, std::abs(an) + std::abs(fd));
            if (err > worst_err) {
                worst_err = err;
                if (worst)
                    *worst = cs.name + " " + cs.params.names[i] + "[" + std::to_string(j) + "]";
            }
        }
    }
    return worst_err;
}

} // namespace

GradCheckReport grad_check(std::uint64_t seed, double eps) {
    rng::SplitMix stream(seed);
    GradCheckReport report;
    std::string worst;

    auto rand_vec = [&stream](std::size_t n) {
        std::vector<float> v(n);
        for (float& x : v) x = static_cast<float>(stream.next_sym(1.0));
        return v;
    };

    // dense chain, both losses
    {
        MlpSpec spec{"gc_mlp", {6, 5, 4}, Act::kNone};
        const int B = 3;
        ParamSet ps;
        add_mlp_params(ps, spec);
        init_mlp_params(ps, spec, stream);
        const std::vector<float> x = rand_vec(6 * B);
        const std::vector<float> target = rand_vec(4 * B);
        const std::vector<int> labels = {1, 3, 0};

        for (int loss_kind = 0; loss_kind < 2; ++loss_kind) {
            GradCheckCase cs;
            cs.name = loss_kind == 0 ? "dense+mse" : "dense+ce";
            cs.params = ps;
            cs.eval = [&, loss_kind](const ParamSet& p, GradAccum* acc) {
                MlpCache cache;
                std::vector<float> y(4 * B);
                mlp_forward_batch(p, spec, x.data(), B, y.data(), acc ? &cache : nullptr);
                std::vector<float> dy(y.size());
                double loss = loss_kind == 0
                                  ? mse_loss(y.data(), target.data(), 4, B, dy.data())
                                  : cross_entropy_loss(y.data(), labels.data(), 4, B, dy.data());
                if (acc) mlp_backward_batch(p, spec, cache, dy.data(), *acc, nullptr);
                return loss;
            };
            std::string w;
            const double err = max_rel_err_for_case(cs, eps, &w);
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                worst = w;
            }
        }
    }

    // two-layer LSTM, final hidden state as prediction / logits
    {
        LstmSpec spec{"gc_lstm", 3, 4, 2};
        ParamSet ps;
        add_lstm_params(ps, spec);
        init_lstm_params(ps, spec, stream);
        std::vector<std::vector<float>> seq;
        for (int t = 0; t < 3; ++t) seq.push_back(rand_vec(3));
        const std::vector<float> target = rand_vec(4);
        const int label = 2;

        for (int loss_kind = 0; loss_kind < 2; ++loss_kind) {
            GradCheckCase cs;
            cs.name = loss_kind == 0 ? "lstm+mse" : "lstm+ce";
            cs.params = ps;
            cs.eval = [&, loss_kind](const ParamSet& p, GradAccum* acc) {
                LstmCache cache;
                std::vector<float> h = lstm_forward(p, spec, seq, acc ? &cache : nullptr);
                std::vector<float> dh(h.size());
                double loss;
                if (loss_kind == 0) {
                    loss = mse_loss(h.data(), target.data(), 4, 1, dh.data());
                } else {
                    loss = cross_entropy_loss(h.data(), &label, 4, 1, dh.data());
                }
                if (acc) lstm_backward(p, spec, cache, dh, *acc, nullptr);
                return loss;
            };
            std::string w;
            const double err = max_rel_err_for_case(cs, eps, &w);
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                worst = w;
            }
        }
    }

    report.worst_case = worst;
    return report;
}

} // namespace seil::nn
