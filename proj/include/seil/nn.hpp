#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seil/prng.hpp"
#include "seil/tensor.hpp"

// Minimal numeric core: dense chains, stacked LSTM, MSE / cross-entropy with
// analytic gradients, Adam, and EMA parameter tracking. Parameters and
// activations are float32; every reduction accumulates in float64.
//
// Batched buffers are feature-major: a [D x B] buffer stores feature d of
// item b at X[d*B + b], so inner loops over the batch vectorize.

namespace seil::nn {

enum class Act { kNone, kRelu };

// Dense chain d0 -> d1 -> ... -> dk. ReLU between layers; `final_act`
// applies to the last layer. Parameters are named `<prefix>.w<i>` /
// `<prefix>.b<i>`.
struct MlpSpec {
    std::string prefix;
    std::vector<int> dims;
    Act final_act = Act::kNone;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    int layer_count() const { return static_cast<int>(dims.size()) - 1; }
};

// Stacked LSTM. Layer l holds `<prefix>.w<l>` of shape [4H x (H + D_l)] with
// gate row blocks ordered i, f, o, g, and `<prefix>.b<l>` of shape [4H].
struct LstmSpec {
    std::string prefix;
    int input_dim = 0;
    int hidden = 0;
    int layers = 2;
};

void add_mlp_params(ParamSet& ps, const MlpSpec& spec);
void add_lstm_params(ParamSet& ps, const LstmSpec& spec);

// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases;
// the LSTM forget-gate bias block is set to 1. Tensors are drawn from the
// stream in declaration order, so a whole network inits from one seed.
void init_mlp_params(ParamSet& ps, const MlpSpec& spec, rng::SplitMix& stream);
void init_lstm_params(ParamSet& ps, const LstmSpec& spec, rng::SplitMix& stream);

// ---------------------------------------------------------------------------
// Kernels. The _serial variants are the reference implementations; the
// unsuffixed entry points dispatch to the OpenMP row-parallel path when the
// thread cap allows. Each output element has a fixed accumulation order, so
// serial and parallel results are bit-identical.

// Z[r,b] = bias[r] + sum_c W[r,c] * X[c,b]   (bias may be null)
void gemm_wx_serial(const float* W, const float* bias, const float* X, float* Z, int rows,
                    int cols, int B);
void gemm_wx_parallel(const float* W, const float* bias, const float* X, float* Z, int rows,
                      int cols, int B);
void gemm_wx(const float* W, const float* bias, const float* X, float* Z, int rows, int cols,
             int B);

// dX[c,b] = sum_r Wt[c,r] * dZ[r,b]   (Wt is W transposed, [cols x rows])
void gemm_wt_dz_serial(const float* Wt, const float* dZ, float* dX, int cols, int rows, int B);
void gemm_wt_dz_parallel(const float* Wt, const float* dZ, float* dX, int cols, int rows,
                         int B);
void gemm_wt_dz(const float* Wt, const float* dZ, float* dX, int cols, int rows, int B);

// dW[r,c] += sum_b dZ[r,b] * X[c,b];  db[r] += sum_b dZ[r,b]
void gemm_dw_acc_serial(const float* dZ, const float* X, double* dW, double* db, int rows,
                        int cols, int B);
void gemm_dw_acc_parallel(const float* dZ, const float* X, double* dW, double* db, int rows,
                          int cols, int B);
void gemm_dw_acc(const float* dZ, const float* X, double* dW, double* db, int rows, int cols,
                 int B);

void transpose(const float* W, float* Wt, int rows, int cols);

// ---------------------------------------------------------------------------
// Double-precision gradient accumulator mirroring a ParamSet.

struct GradAccum {
    std::vector<std::vector<double>> g;

    void init(const ParamSet& ps);
    void clear();
    double* of(std::size_t param_idx) { return g[param_idx].data(); }

    // grads[i] = float(scale * g[i]); grads must be a zeros clone of the params.
    void scale_to(double scale, ParamSet& grads) const;
};

// ---------------------------------------------------------------------------
// MLP forward/backward over a feature-major batch.

struct MlpCache {
    int B = 0;
    std::vector<std::vector<float>> acts; // acts[0] = input, acts[i] = layer i output
};

void mlp_forward_batch(const ParamSet& ps, const MlpSpec& spec, const float* X, int B,
                       float* Y, MlpCache* cache);
// dX may be null when input gradients are not needed.
void mlp_backward_batch(const ParamSet& ps, const MlpSpec& spec, const MlpCache& cache,
                        const float* dY, GradAccum& grads, float* dX);

// Single-vector convenience (B = 1).
std::vector<float> mlp_forward(const ParamSet& ps, const MlpSpec& spec,
                               const std::vector<float>& x);

// ---------------------------------------------------------------------------
// LSTM cell over a packed batch of width n.
//
// hx is the concatenated [h_prev ; x] buffer, [(H+D) x n]. The cell writes
// post-nonlinearity gates ([4H x n], blocks i,f,o,g), the new cell state,
// tanh(c), and the new hidden state.
void lstm_cell_forward(const float* W, const float* b, int H, int D, int n, const float* hx,
                       const float* c_prev, float* gates, float* c_out, float* tanh_c,
                       float* h_out);

// Backward for one cell step. dh/dc_in are gradients flowing into h_t/c_t;
// outputs dhx ([(H+D) x n]) and dc_prev. Wt is the transposed weight matrix.
void lstm_cell_backward(const float* Wt, int H, int D, int n, const float* hx,
                        const float* c_prev, const float* gates, const float* c_out,
                        const float* tanh_c, const float* dh, const float* dc_in, double* dW,
                        double* db, float* dhx, float* dc_prev);

// Single-sequence stacked-LSTM forward: returns the top-layer final hidden
// state; the cache holds everything backward-through-time needs.
struct LstmCache {
    int T = 0;
    // indexed [t][layer]
    std::vector<std::vector<std::vector<float>>> hx, gates, c, tanh_c;
};

std::vector<float> lstm_forward(const ParamSet& ps, const LstmSpec& spec,
                                const std::vector<std::vector<float>>& inputs,
                                LstmCache* cache);
// d_final_h: gradient at the top-layer final hidden state. dX (optional,
// size T*input_dim) receives per-step input gradients.
void lstm_backward(const ParamSet& ps, const LstmSpec& spec, const LstmCache& cache,
                   const std::vector<float>& d_final_h, GradAccum& grads, float* dX);

// ---------------------------------------------------------------------------
// Losses (batch means, float64 accumulation).

// Mean over all B*D elements of (pred-target)^2; dpred filled if non-null.
double mse_loss(const float* pred, const float* target, int D, int B, float* dpred);

// Mean over B of -log softmax(logits[:,b])[label[b]]; log-sum-exp stabilized.
double cross_entropy_loss(const float* logits, const int* labels, int L, int B,
                          float* dlogits);

// Softmax of a single logit vector, computed in float64.
std::vector<double> softmax(const std::vector<float>& logits);

// ---------------------------------------------------------------------------
// Optimizer and EMA tracking.

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam update; requires initialized adam state.
void adam_step(ParamSet& ps, const ParamSet& grads, const AdamConfig& cfg);

// shadow = tau * shadow + (1 - tau) * param, element-wise; params untouched.
void ema_update(ParamSet& ps, float tau);

// ---------------------------------------------------------------------------
// Finite-difference verification of every analytic gradient path.

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_case;
};

// Compares analytic gradients against central differences on small random
// instances of {dense, 2-layer LSTM} x {mse, cross_entropy}.
GradCheckReport grad_check(std::uint64_t seed, double eps = 1e-3);

} // namespace seil::nn
