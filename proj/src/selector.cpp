#include "seil/selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace seil::selector {

namespace {

// --- stride helpers for the lockstep batch ----------------------------------
// State buffers are [rows x B]; per-step buffers are packed to the active
// width n (items sorted by length descending, so the active set is a prefix).

void pack_cols(const float* src, int rows, int src_w, float* dst, int n) {
    for (int r = 0; r < rows; ++r)
        std::memcpy(dst + static_cast<std::size_t>(r) * n,
                    src + static_cast<std::size_t>(r) * src_w,
                    static_cast<std::size_t>(n) * sizeof(float));
}

void unpack_cols(const float* src, int rows, float* dst, int dst_w, int n) {
    for (int r = 0; r < rows; ++r)
        std::memcpy(dst + static_cast<std::size_t>(r) * dst_w,
                    src + static_cast<std::size_t>(r) * n,
                    static_cast<std::size_t>(n) * sizeof(float));
}

struct StepCache {
    int n = 0;
    nn::MlpCache action_cache;                 // phi_a activations
    std::vector<std::vector<float>> hx;        // per layer, [(H+D) x n]
    std::vector<std::vector<float>> gates;     // per layer, [4H x n]
    std::vector<std::vector<float>> c;         // per layer, [H x n]
    std::vector<std::vector<float>> tanh_c;    // per layer, [H x n]
};

struct BatchCaches {
    std::vector<int> order;      // sorted item index -> caller index
    std::vector<int> lens;       // sorted order
    std::vector<StepCache> steps;
    nn::MlpCache image_cache;
    nn::MlpCache head_cache;
    std::vector<float> final_h;  // [H x B]
};

// Forward over a batch of trajectories; logits come out in caller order.
std::vector<float> forward_batch(const nn::ParamSet& params, const SelectorSpec& spec,
                                 const std::vector<const sim::Trajectory*>& demos,
                                 BatchCaches* caches) {
    const int B = static_cast<int>(demos.size());
    if (B == 0) throw std::invalid_argument("selector: empty batch");
    const int H = spec.hidden;
    const int L = spec.lstm_layers;
    const int F = spec.fused_dim();

    std::vector<int> order(static_cast<std::size_t>(B));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return demos[static_cast<std::size_t>(a)]->steps.size() >
               demos[static_cast<std::size_t>(b)]->steps.size();
    });
    std::vector<int> lens(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
        lens[i] = static_cast<int>(demos[static_cast<std::size_t>(order[i])]->steps.size());
        if (lens[i] == 0)
            throw std::invalid_argument("selector: trajectory with empty action sequence");
    }
    const int maxT = lens[0];

    // image embedding, computed once per trajectory
    std::vector<float> fx(static_cast<std::size_t>(spec.image_emb) * B, 0.0f);
    nn::MlpCache image_cache;
    if (!spec.sequence_only) {
        std::vector<float> frames(static_cast<std::size_t>(spec.frame_dim) * B);
        for (int i = 0; i < B; ++i) {
            const auto& f = demos[static_cast<std::size_t>(order[i])]->first_frame;
            for (int d = 0; d < spec.frame_dim; ++d)
                frames[static_cast<std::size_t>(d) * B + i] = f[static_cast<std::size_t>(d)];
        }
        nn::mlp_forward_batch(params, spec.image_spec(), frames.data(), B, fx.data(),
                              caches ? &image_cache : nullptr);
    }

    std::vector<std::vector<float>> h(static_cast<std::size_t>(L)),
        c(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        h[l].assign(static_cast<std::size_t>(H) * B, 0.0f);
        c[l].assign(static_cast<std::size_t>(H) * B, 0.0f);
    }
    std::vector<float> final_h(static_cast<std::size_t>(H) * B, 0.0f);

    std::vector<StepCache> steps;
    if (caches) steps.resize(static_cast<std::size_t>(maxT));

    const nn::MlpSpec action_spec = spec.action_spec();
    for (int t = 0; t < maxT; ++t) {
        int n = 0;
        while (n < B && lens[n] > t) ++n;

        // action embeddings for the active prefix
        std::vector<float> a_in(static_cast<std::size_t>(sim::kActionDim) * n);
        for (int i = 0; i < n; ++i) {
            const sim::Action& a =
                demos[static_cast<std::size_t>(order[i])]->steps[static_cast<std::size_t>(t)]
                    .second;
            for (int d = 0; d < sim::kActionDim; ++d)
                a_in[static_cast<std::size_t>(d) * n + i] = a[static_cast<std::size_t>(d)];
        }
        std::vector<float> fa(static_cast<std::size_t>(spec.action_emb) * n);
        nn::MlpCache action_cache;
        nn::mlp_forward_batch(params, action_spec, a_in.data(), n, fa.data(),
                              caches ? &action_cache : nullptr);

        // fused input [f_x ; f_a]
        std::vector<float> xt(static_cast<std::size_t>(F) * n);
        pack_cols(fx.data(), spec.image_emb, B, xt.data(), n);
        std::memcpy(xt.data() + static_cast<std::size_t>(spec.image_emb) * n, fa.data(),
                    fa.size() * sizeof(float));

        StepCache* sc = caches ? &steps[static_cast<std::size_t>(t)] : nullptr;
        if (sc) {
            sc->n = n;
            sc->action_cache = std::move(action_cache);
            sc->hx.resize(static_cast<std::size_t>(L));
            sc->gates.resize(static_cast<std::size_t>(L));
            sc->c.resize(static_cast<std::size_t>(L));
            sc->tanh_c.resize(static_cast<std::size_t>(L));
        }

        const float* x = xt.data();
        int xd = F;
        std::vector<float> layer_out;
        for (int l = 0; l < L; ++l) {
            const nn::Tensor& w = params.at("lstm.w" + std::to_string(l));
            const nn::Tensor& b = params.at("lstm.b" + std::to_string(l));
            std::vector<float> hx(static_cast<std::size_t>(H + xd) * n);
            pack_cols(h[l].data(), H, B, hx.data(), n);
            std::memcpy(hx.data() + static_cast<std::size_t>(H) * n, x,
                        static_cast<std::size_t>(xd) * n * sizeof(float));
            std::vector<float> c_prev(static_cast<std::size_t>(H) * n);
            pack_cols(c[l].data(), H, B, c_prev.data(), n);

            std::vector<float> gates(4 * static_cast<std::size_t>(H) * n);
            std::vector<float> c_out(static_cast<std::size_t>(H) * n);
            std::vector<float> tanh_c(static_cast<std::size_t>(H) * n);
            std::vector<float> h_out(static_cast<std::size_t>(H) * n);
            nn::lstm_cell_forward(w.data.data(), b.data.data(), H, xd, n, hx.data(),
                                  c_prev.data(), gates.data(), c_out.data(), tanh_c.data(),
                                  h_out.data());
            unpack_cols(h_out.data(), H, h[l].data(), B, n);
            unpack_cols(c_out.data(), H, c[l].data(), B, n);
            if (sc) {
                sc->hx[l] = std::move(hx);
                sc->gates[l] = std::move(gates);
                sc->c[l] = std::move(c_out);
                sc->tanh_c[l] = std::move(tanh_c);
            }
            layer_out = std::move(h_out);
            x = layer_out.data();
            xd = H;
        }

        // items finishing at this step contribute their final hidden state
        for (int i = 0; i < n; ++i)
            if (lens[i] == t + 1)
                for (int r = 0; r < H; ++r)
                    final_h[static_cast<std::size_t>(r) * B + i] =
                        h[L - 1][static_cast<std::size_t>(r) * B + i];
    }

    std::vector<float> logits_sorted(static_cast<std::size_t>(spec.num_classes) * B);
    nn::MlpCache head_cache;
    nn::mlp_forward_batch(params, spec.head_spec(), final_h.data(), B,
                          logits_sorted.data(), caches ? &head_cache : nullptr);

    if (caches) {
        caches->order = order;
        caches->lens = lens;
        caches->steps = std::move(steps);
        caches->image_cache = std::move(image_cache);
        caches->head_cache = std::move(head_cache);
        caches->final_h = std::move(final_h);
    }

    // back to caller order
    std::vector<float> logits(static_cast<std::size_t>(spec.num_classes) * B);
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < spec.num_classes; ++k)
            logits[static_cast<std::size_t>(k) * B + order[i]] =
                logits_sorted[static_cast<std::size_t>(k) * B + i];
    return logits;
}

// Backward from dlogits (caller order); accumulates into acc.
void backward_batch(const nn::ParamSet& params, const SelectorSpec& spec,
                    const BatchCaches& caches, const std::vector<float>& dlogits,
                    nn::GradAccum& acc) {
    const int B = static_cast<int>(caches.order.size());
    const int H = spec.hidden;
    const int L = spec.lstm_layers;
    const int F = spec.fused_dim();

    std::vector<float> dlogits_sorted(dlogits.size());
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < spec.num_classes; ++k)
            dlogits_sorted[static_cast<std::size_t>(k) * B + i] =
                dlogits[static_cast<std::size_t>(k) * B + caches.order[i]];

    std::vector<float> dfinal_h(static_cast<std::size_t>(H) * B);
    nn::mlp_backward_batch(params, spec.head_spec(), caches.head_cache,
                           dlogits_sorted.data(), acc, dfinal_h.data());

    std::vector<std::vector<float>> wt(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        const int d = l == 0 ? F : H;
        const nn::Tensor& w = params.at("lstm.w" + std::to_string(l));
        wt[l].resize(w.data.size());
        nn::transpose(w.data.data(), wt[l].data(), 4 * H, H + d);
    }

    std::vector<std::vector<float>> dh(static_cast<std::size_t>(L)),
        dc(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        dh[l].assign(static_cast<std::size_t>(H) * B, 0.0f);
        dc[l].assign(static_cast<std::size_t>(H) * B, 0.0f);
    }
    std::vector<float> dfx(static_cast<std::size_t>(spec.image_emb) * B, 0.0f);

    const nn::MlpSpec action_spec = spec.action_spec();
    const int maxT = static_cast<int>(caches.steps.size());
    const int wi0 = params.index_of("lstm.w0");
    for (int t = maxT - 1; t >= 0; --t) {
        const StepCache& sc = caches.steps[static_cast<std::size_t>(t)];
        const int n = sc.n;

        // gradient injection for items whose final step is t
        for (int i = 0; i < n; ++i)
            if (caches.lens[i] == t + 1)
                for (int r = 0; r < H; ++r)
                    dh[L - 1][static_cast<std::size_t>(r) * B + i] +=
                        dfinal_h[static_cast<std::size_t>(r) * B + i];

        std::vector<float> dx_above; // [H x n], layer l+1 -> layer l
        for (int l = L - 1; l >= 0; --l) {
            const int d = l == 0 ? F : H;
            std::vector<float> dh_in(static_cast<std::size_t>(H) * n);
            pack_cols(dh[l].data(), H, B, dh_in.data(), n);
            if (l + 1 < L)
                for (std::size_t j = 0; j < dh_in.size(); ++j) dh_in[j] += dx_above[j];
            std::vector<float> dc_in(static_cast<std::size_t>(H) * n);
            pack_cols(dc[l].data(), H, B, dc_in.data(), n);

            std::vector<float> c_prev(static_cast<std::size_t>(H) * n, 0.0f);
            if (t > 0) {
                const StepCache& prev = caches.steps[static_cast<std::size_t>(t - 1)];
                pack_cols(prev.c[l].data(), H, prev.n, c_prev.data(), n);
            }

            const int wi = wi0 + 2 * l;
            const int bi = wi + 1;
            std::vector<float> dhx(static_cast<std::size_t>(H + d) * n);
            std::vector<float> dc_prev(static_cast<std::size_t>(H) * n);
            nn::lstm_cell_backward(wt[l].data(), H, d, n, sc.hx[l].data(), c_prev.data(),
                                   sc.gates[l].data(), sc.c[l].data(), sc.tanh_c[l].data(),
                                   dh_in.data(), dc_in.data(),
                                   acc.of(static_cast<std::size_t>(wi)),
                                   acc.of(static_cast<std::size_t>(bi)), dhx.data(),
                                   dc_prev.data());
            unpack_cols(dhx.data(), H, dh[l].data(), B, n);
            unpack_cols(dc_prev.data(), H, dc[l].data(), B, n);

            if (l > 0) {
                dx_above.assign(dhx.begin() + static_cast<std::ptrdiff_t>(H) * n,
                                dhx.end());
            } else {
                // split the fused-input gradient
                const float* dxt = dhx.data() + static_cast<std::size_t>(H) * n;
                for (int r = 0; r < spec.image_emb; ++r)
                    for (int i = 0; i < n; ++i)
                        dfx[static_cast<std::size_t>(r) * B + i] +=
                            dxt[static_cast<std::size_t>(r) * n + i];
                std::vector<float> dfa(
                    dxt + static_cast<std::size_t>(spec.image_emb) * n,
                    dxt + static_cast<std::size_t>(F) * n);
                nn::mlp_backward_batch(params, action_spec, sc.action_cache, dfa.data(),
                                       acc, nullptr);
            }
        }
    }

    if (!spec.sequence_only)
        nn::mlp_backward_batch(params, spec.image_spec(), caches.image_cache, dfx.data(),
                               acc, nullptr);
}

} // namespace

nn::ParamSet init_selector(const SelectorSpec& spec, std::uint64_t seed) {
    nn::ParamSet ps;
    nn::add_mlp_params(ps, spec.image_spec());
    nn::add_mlp_params(ps, spec.action_spec());
    nn::add_lstm_params(ps, spec.lstm_spec());
    nn::add_mlp_params(ps, spec.head_spec());
    rng::SplitMix stream(seed);
    nn::init_mlp_params(ps, spec.image_spec(), stream);
    nn::init_mlp_params(ps, spec.action_spec(), stream);
    nn::init_lstm_params(ps, spec.lstm_spec(), stream);
    nn::init_mlp_params(ps, spec.head_spec(), stream);
    return ps;
}

std::vector<float> selector_logits(const nn::ParamSet& params, const SelectorSpec& spec,
                                   const float* first_frame,
                                   const std::vector<sim::Action>& actions) {
    if (actions.empty())
        throw std::invalid_argument("selector_logits: empty action sequence");
    sim::Trajectory tmp;
    std::copy(first_frame, first_frame + spec.frame_dim, tmp.first_frame.begin());
    for (const sim::Action& a : actions) tmp.steps.emplace_back(sim::Observation{}, a);
    return selector_logits(params, spec, tmp);
}

std::vector<float> selector_logits(const nn::ParamSet& params, const SelectorSpec& spec,
                                   const sim::Trajectory& demo) {
    return forward_batch(params, spec, {&demo}, nullptr);
}

TrainStats train_selector(nn::ParamSet& params, const SelectorSpec& spec,
                          const std::vector<sim::Trajectory>& expert_demos,
                          const TrainOptions& opts) {
    std::vector<int> per_task(static_cast<std::size_t>(spec.num_classes), 0);
    for (const auto& d : expert_demos) {
        if (d.task_id < 0 || d.task_id >= spec.num_classes)
            throw std::invalid_argument("train_selector: demo task out of range");
        per_task[static_cast<std::size_t>(d.task_id)] += 1;
    }
    for (int t = 0; t < spec.num_classes; ++t)
        if (per_task[static_cast<std::size_t>(t)] == 0)
            throw std::invalid_argument("train_selector: task " + std::to_string(t) +
                                        " has no demonstrations");

    if (!params.has_adam()) params.init_adam_state();
    nn::GradAccum acc;
    acc.init(params);
    nn::ParamSet grads = params.zeros_clone();

    const std::size_t n = expert_demos.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::SplitMix shuffle(opts.shuffle_seed);

    TrainStats stats;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = shuffle.next_below(i + 1);
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(opts.batch_size)) {
            const int bn = static_cast<int>(
                std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size), n - start));
            std::vector<const sim::Trajectory*> batch;
            std::vector<int> labels;
            for (int b = 0; b < bn; ++b) {
                const sim::Trajectory& d = expert_demos[order[start + static_cast<std::size_t>(b)]];
                batch.push_back(&d);
                labels.push_back(d.task_id);
            }
            BatchCaches caches;
            const std::vector<float> logits = forward_batch(params, spec, batch, &caches);
            std::vector<float> dlogits(logits.size());
            const double loss = nn::cross_entropy_loss(logits.data(), labels.data(),
                                                       spec.num_classes, bn, dlogits.data());
            if (!std::isfinite(loss))
                throw std::runtime_error("train_selector: non-finite loss (epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches) + ")");
            acc.clear();
            backward_batch(params, spec, caches, dlogits, acc);
            acc.scale_to(1.0, grads);
            nn::adam_step(params, grads, opts.adam);
            epoch_loss += loss;
            ++batches;
        }
        if (epoch == opts.epochs - 1 && batches > 0) stats.final_loss = epoch_loss / batches;
    }
    stats.train_accuracy = classification_accuracy(params, spec, expert_demos);
    return stats;
}

double classification_accuracy(const nn::ParamSet& params, const SelectorSpec& spec,
                               const std::vector<sim::Trajectory>& demos) {
    if (demos.empty()) return 0.0;
    int correct = 0;
    const int chunk = 16;
    for (std::size_t start = 0; start < demos.size(); start += chunk) {
        const int bn =
            static_cast<int>(std::min<std::size_t>(chunk, demos.size() - start));
        std::vector<const sim::Trajectory*> batch;
        for (int b = 0; b < bn; ++b) batch.push_back(&demos[start + static_cast<std::size_t>(b)]);
        const std::vector<float> logits = forward_batch(params, spec, batch, nullptr);
        for (int b = 0; b < bn; ++b) {
            int best = 0;
            for (int k = 1; k < spec.num_classes; ++k)
                if (logits[static_cast<std::size_t>(k) * bn + b] >
                    logits[static_cast<std::size_t>(best) * bn + b])
                    best = k;
            if (best == batch[static_cast<std::size_t>(b)]->task_id) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(demos.size());
}

ScoredDemo score_confidence(const nn::ParamSet& params, const SelectorSpec& spec,
                            const sim::Trajectory& demo) {
    const std::vector<float> logits = selector_logits(params, spec, demo);
    const std::vector<double> probs = nn::softmax(logits);
    ScoredDemo scored;
    scored.demo = &demo;
    scored.confidence = probs[static_cast<std::size_t>(demo.task_id)];
    return scored;
}

const char* scheme_name(Scheme s) {
    switch (s) {
    case Scheme::kUniform: return "uniform";
    case Scheme::kDescending: return "descending";
    case Scheme::kAscending: return "ascending";
    case Scheme::kMixed: return "mixed";
    }
    return "ascending";
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "uniform") return Scheme::kUniform;
    if (name == "descending") return Scheme::kDescending;
    if (name == "ascending") return Scheme::kAscending;
    if (name == "mixed") return Scheme::kMixed;
    throw std::invalid_argument("unknown selection scheme: " + name);
}

namespace {

std::vector<ScoredDemo> sorted_by(const std::vector<ScoredDemo>& scored, bool ascending) {
    std::vector<ScoredDemo> out = scored;
    std::sort(out.begin(), out.end(), [ascending](const ScoredDemo& a, const ScoredDemo& b) {
        if (a.confidence != b.confidence)
            return ascending ? a.confidence < b.confidence : a.confidence > b.confidence;
        return a.key() < b.key();
    });
    return out;
}

} // namespace

std::vector<ScoredDemo> select(const std::vector<ScoredDemo>& scored, int k, Scheme scheme,
                               rng::SplitMix& stream) {
    if (k < 0) throw std::invalid_argument("select: negative k");
    const int n = static_cast<int>(scored.size());
    if (k == 0) return {};
    if (k >= n) {
        std::vector<ScoredDemo> all = scored;
        std::sort(all.begin(), all.end(),
                  [](const ScoredDemo& a, const ScoredDemo& b) { return a.key() < b.key(); });
        return all;
    }
    switch (scheme) {
    case Scheme::kAscending: {
        std::vector<ScoredDemo> out = sorted_by(scored, true);
        out.resize(static_cast<std::size_t>(k));
        return out;
    }
    case Scheme::kDescending: {
        std::vector<ScoredDemo> out = sorted_by(scored, false);
        out.resize(static_cast<std::size_t>(k));
        return out;
    }
    case Scheme::kMixed: {
        const int take_desc = (k + 1) / 2;
        std::vector<ScoredDemo> desc = sorted_by(scored, false);
        std::vector<ScoredDemo> out(desc.begin(), desc.begin() + take_desc);
        std::vector<const sim::Trajectory*> taken;
        for (const auto& s : out) taken.push_back(s.demo);
        for (const ScoredDemo& s : sorted_by(scored, true)) {
            if (static_cast<int>(out.size()) >= k) break;
            if (std::find(taken.begin(), taken.end(), s.demo) == taken.end())
                out.push_back(s);
        }
        return out;
    }
    case Scheme::kUniform: {
        std::vector<ScoredDemo> pool = scored;
        std::sort(pool.begin(), pool.end(),
                  [](const ScoredDemo& a, const ScoredDemo& b) { return a.key() < b.key(); });
        std::vector<ScoredDemo> out;
        for (int j = 0; j < k; ++j) {
            const std::size_t pick =
                static_cast<std::size_t>(j) +
                static_cast<std::size_t>(stream.next_below(static_cast<std::uint64_t>(n - j)));
            std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
            out.push_back(pool[static_cast<std::size_t>(j)]);
        }
        return out;
    }
    }
    return {};
}

} // namespace seil::selector
