#include "odi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace odi {

EvalResult DifferentiableModel::forward_backward(const Image& x,
                                                 const std::vector<double>& grad_outputs) const {
    return forward_backward(x, [&](const std::vector<double>&) {
        return std::make_pair(0.0, grad_outputs);
    });
}

TinyCnn::TinyCnn(int c1_, int c2_, int classes) : c1(c1_), c2(c2_), num_classes(classes) {
    w1.assign(static_cast<size_t>(c1) * 3 * 9, 0.0);
    b1.assign(c1, 0.0);
    w2.assign(static_cast<size_t>(c2) * c1 * 9, 0.0);
    b2.assign(c2, 0.0);
    wf.assign(static_cast<size_t>(num_classes) * c2, 0.0);
    bf.assign(num_classes, 0.0);
}

TinyCnn TinyCnn::random_init(int c1, int c2, int classes, uint64_t seed) {
    TinyCnn m(c1, c2, classes);
    Rng rng(seed);
    auto glorot = [&](std::vector<double>& w, int fan_in, int fan_out) {
        double s = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w) v = rng.uniform(-s, s);
    };
    glorot(m.w1, 3 * 9, c1 * 9);
    glorot(m.w2, c1 * 9, c2 * 9);
    glorot(m.wf, c2, classes);
    return m;
}

size_t TinyCnn::parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + wf.size() + bf.size();
}

namespace {

// correlation with a 3x3 kernel, stride 1, zero pad 1; plane-major layout
void conv3x3_forward(const double* in, int C, int H, int W, const double* w, const double* b,
                     int OC, double* out) {
    size_t plane = static_cast<size_t>(H) * W;
    for (int oc = 0; oc < OC; ++oc) {
        double* o = out + oc * plane;
        std::fill(o, o + plane, b[oc]);
        for (int ic = 0; ic < C; ++ic) {
            const double* base = in + ic * plane;
            const double* wk = w + (static_cast<size_t>(oc) * C + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    int dx = kx - 1;
                    double wv = wk[ky * 3 + kx];
                    int y0 = std::max(0, -dy), y1 = H - std::max(0, dy);
                    int x0 = std::max(0, -dx), x1 = W - std::max(0, dx);
                    for (int y = y0; y < y1; ++y) {
                        const double* ir = base + static_cast<size_t>(y + dy) * W + dx;
                        double* orow = o + static_cast<size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * ir[x];
                    }
                }
            }
        }
    }
}

void conv3x3_backward_data(const double* gout, int C, int H, int W, const double* w, int OC,
                           double* gin) {
    size_t plane = static_cast<size_t>(H) * W;
    std::fill(gin, gin + static_cast<size_t>(C) * plane, 0.0);
    for (int oc = 0; oc < OC; ++oc) {
        const double* go = gout + oc * plane;
        for (int ic = 0; ic < C; ++ic) {
            double* gi = gin + ic * plane;
            const double* wk = w + (static_cast<size_t>(oc) * C + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    int dx = kx - 1;
                    double wv = wk[ky * 3 + kx];
                    // out[y][x] consumed in[y+dy][x+dx]
                    int y0 = std::max(0, -dy), y1 = H - std::max(0, dy);
                    int x0 = std::max(0, -dx), x1 = W - std::max(0, dx);
                    for (int y = y0; y < y1; ++y) {
                        double* girow = gi + static_cast<size_t>(y + dy) * W + dx;
                        const double* gorow = go + static_cast<size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) girow[x] += wv * gorow[x];
                    }
                }
            }
        }
    }
}

void conv3x3_backward_weights(const double* in, const double* gout, int C, int H, int W, int OC,
                              double* gw, double* gb) {
    size_t plane = static_cast<size_t>(H) * W;
    for (int oc = 0; oc < OC; ++oc) {
        const double* go = gout + oc * plane;
        double gbias = 0.0;
        for (size_t i = 0; i < plane; ++i) gbias += go[i];
        gb[oc] += gbias;
        for (int ic = 0; ic < C; ++ic) {
            const double* base = in + ic * plane;
            double* wk = gw + (static_cast<size_t>(oc) * C + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    int dx = kx - 1;
                    int y0 = std::max(0, -dy), y1 = H - std::max(0, dy);
                    int x0 = std::max(0, -dx), x1 = W - std::max(0, dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* ir = base + static_cast<size_t>(y + dy) * W + dx;
                        const double* gorow = go + static_cast<size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) acc += ir[x] * gorow[x];
                    }
                    wk[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

} // namespace

struct TinyCnn::Acts {
    int H = 0, W = 0;   // input size
    int H2 = 0, W2 = 0; // after 2x2 pooling
    std::vector<double> x;    // [3][H][W]
    std::vector<double> a1;   // conv1 pre-relu
    std::vector<double> r1;   // post-relu
    std::vector<double> p1;   // pooled
    std::vector<double> a2;   // conv2 pre-relu
    std::vector<double> r2;   // post-relu
    std::vector<double> feat; // [c2] global average
    uint64_t kink_hash = 0;
};

void TinyCnn::run_forward(const Image& img, Acts& a) const {
    if (img.width < min_input_size() || img.height < min_input_size())
        throw std::invalid_argument("tinycnn: input below minimum size 8x8");
    a.H = img.height;
    a.W = img.width;
    a.H2 = a.H / 2;
    a.W2 = a.W / 2;
    size_t plane = static_cast<size_t>(a.H) * a.W;
    size_t plane2 = static_cast<size_t>(a.H2) * a.W2;

    a.x.resize(3 * plane);
    // inputs centered at zero; raw [0,1] pixels train poorly
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.H; ++y)
            for (int x = 0; x < a.W; ++x)
                a.x[c * plane + static_cast<size_t>(y) * a.W + x] = img.at(x, y, c) - 0.5;

    a.a1.resize(static_cast<size_t>(c1) * plane);
    conv3x3_forward(a.x.data(), 3, a.H, a.W, w1.data(), b1.data(), c1, a.a1.data());

    uint64_t kink = 0xcbf29ce484222325ull;
    auto mix = [&kink](bool bit) { kink = (kink ^ (bit ? 0x9e3779b97f4a7c15ull : 0x517cc1b727220a95ull)) * 0x100000001b3ull; };

    a.r1.resize(a.a1.size());
    for (size_t i = 0; i < a.a1.size(); ++i) {
        bool on = a.a1[i] > 0.0;
        mix(on);
        a.r1[i] = on ? a.a1[i] : 0.0;
    }

    a.p1.assign(static_cast<size_t>(c1) * plane2, 0.0);
    for (int c = 0; c < c1; ++c) {
        const double* rin = a.r1.data() + c * plane;
        double* pout = a.p1.data() + c * plane2;
        for (int y = 0; y < a.H2; ++y)
            for (int x = 0; x < a.W2; ++x) {
                const double* q = rin + static_cast<size_t>(2 * y) * a.W + 2 * x;
                pout[static_cast<size_t>(y) * a.W2 + x] = 0.25 * (q[0] + q[1] + q[a.W] + q[a.W + 1]);
            }
    }

    a.a2.resize(static_cast<size_t>(c2) * plane2);
    conv3x3_forward(a.p1.data(), c1, a.H2, a.W2, w2.data(), b2.data(), c2, a.a2.data());

    a.r2.resize(a.a2.size());
    for (size_t i = 0; i < a.a2.size(); ++i) {
        bool on = a.a2[i] > 0.0;
        mix(on);
        a.r2[i] = on ? a.a2[i] : 0.0;
    }
    a.kink_hash = kink;

    a.feat.assign(c2, 0.0);
    double inv = 1.0 / static_cast<double>(plane2);
    for (int c = 0; c < c2; ++c) {
        const double* r = a.r2.data() + c * plane2;
        double s = 0.0;
        for (size_t i = 0; i < plane2; ++i) s += r[i];
        a.feat[c] = s * inv;
    }
}

GradientField TinyCnn::backward_from_feat(const Acts& a, const std::vector<double>& grad_feat) const {
    size_t plane = static_cast<size_t>(a.H) * a.W;
    size_t plane2 = static_cast<size_t>(a.H2) * a.W2;
    double inv = 1.0 / static_cast<double>(plane2);

    std::vector<double> g_r2(static_cast<size_t>(c2) * plane2);
    for (int c = 0; c < c2; ++c) {
        double g = grad_feat[c] * inv;
        double* row = g_r2.data() + c * plane2;
        std::fill(row, row + plane2, g);
    }
    for (size_t i = 0; i < g_r2.size(); ++i)
        if (!(a.a2[i] > 0.0)) g_r2[i] = 0.0;

    std::vector<double> g_p1(static_cast<size_t>(c1) * plane2);
    conv3x3_backward_data(g_r2.data(), c1, a.H2, a.W2, w2.data(), c2, g_p1.data());

    std::vector<double> g_r1(static_cast<size_t>(c1) * plane, 0.0);
    for (int c = 0; c < c1; ++c) {
        const double* gp = g_p1.data() + c * plane2;
        double* gr = g_r1.data() + c * plane;
        for (int y = 0; y < a.H2; ++y)
            for (int x = 0; x < a.W2; ++x) {
                double g = 0.25 * gp[static_cast<size_t>(y) * a.W2 + x];
                double* q = gr + static_cast<size_t>(2 * y) * a.W + 2 * x;
                q[0] += g;
                q[1] += g;
                q[a.W] += g;
                q[a.W + 1] += g;
            }
    }
    for (size_t i = 0; i < g_r1.size(); ++i)
        if (!(a.a1[i] > 0.0)) g_r1[i] = 0.0;

    std::vector<double> g_x(3 * plane);
    conv3x3_backward_data(g_r1.data(), 3, a.H, a.W, w1.data(), c1, g_x.data());

    GradientField out(a.W, a.H);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < a.H; ++y)
            for (int x = 0; x < a.W; ++x)
                out.at(x, y, c) = g_x[c * plane + static_cast<size_t>(y) * a.W + x];
    return out;
}

std::vector<double> TinyCnn::forward(const Image& x, uint64_t* kink_signature) const {
    Acts a;
    run_forward(x, a);
    if (kink_signature) *kink_signature = a.kink_hash;
    std::vector<double> logits(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        double s = bf[k];
        const double* row = wf.data() + static_cast<size_t>(k) * c2;
        for (int c = 0; c < c2; ++c) s += row[c] * a.feat[c];
        logits[k] = s;
    }
    return logits;
}

EvalResult TinyCnn::forward_backward(const Image& x, const LossFn& loss) const {
    Acts a;
    run_forward(x, a);
    EvalResult res;
    res.outputs.resize(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        double s = bf[k];
        const double* row = wf.data() + static_cast<size_t>(k) * c2;
        for (int c = 0; c < c2; ++c) s += row[c] * a.feat[c];
        res.outputs[k] = s;
    }
    auto [lv, grad_logits] = loss(res.outputs);
    if (static_cast<int>(grad_logits.size()) != num_classes)
        throw std::invalid_argument("tinycnn: output gradient size mismatch");
    res.loss = lv;

    std::vector<double> grad_feat(c2, 0.0);
    for (int k = 0; k < num_classes; ++k) {
        double g = grad_logits[k];
        if (g == 0.0) continue;
        const double* row = wf.data() + static_cast<size_t>(k) * c2;
        for (int c = 0; c < c2; ++c) grad_feat[c] += g * row[c];
    }
    res.grad_input = backward_from_feat(a, grad_feat);
    return res;
}

TinyCnnEmbedding TinyCnnEmbedding::from_classifier(const TinyCnn& trained, uint64_t seed) {
    TinyCnnEmbedding e;
    e.trunk = trained;
    e.embed_dim = 32;
    e.we.resize(static_cast<size_t>(e.embed_dim) * trained.c2);
    e.be.assign(e.embed_dim, 0.0);
    Rng rng(seed);
    double s = std::sqrt(6.0 / (trained.c2 + e.embed_dim));
    for (double& v : e.we) v = rng.uniform(-s, s);
    return e;
}

namespace {

// y = v / ||v||; zero-norm input is rejected
std::vector<double> l2_normalize(const std::vector<double>& v, double* norm_out) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    double n = std::sqrt(n2);
    if (!(n > 0.0)) throw std::runtime_error("embedding: zero feature vector");
    if (norm_out) *norm_out = n;
    std::vector<double> y(v.size());
    for (size_t i = 0; i < v.size(); ++i) y[i] = v[i] / n;
    return y;
}

} // namespace

std::vector<double> TinyCnnEmbedding::forward(const Image& x, uint64_t* kink_signature) const {
    TinyCnn::Acts a;
    trunk.run_forward(x, a);
    if (kink_signature) *kink_signature = a.kink_hash;
    std::vector<double> v(embed_dim);
    for (int k = 0; k < embed_dim; ++k) {
        double s = be[k];
        const double* row = we.data() + static_cast<size_t>(k) * trunk.c2;
        for (int c = 0; c < trunk.c2; ++c) s += row[c] * a.feat[c];
        v[k] = s;
    }
    return l2_normalize(v, nullptr);
}

EvalResult TinyCnnEmbedding::forward_backward(const Image& x, const LossFn& loss) const {
    TinyCnn::Acts a;
    trunk.run_forward(x, a);
    std::vector<double> v(embed_dim);
    for (int k = 0; k < embed_dim; ++k) {
        double s = be[k];
        const double* row = we.data() + static_cast<size_t>(k) * trunk.c2;
        for (int c = 0; c < trunk.c2; ++c) s += row[c] * a.feat[c];
        v[k] = s;
    }
    double n = 0.0;
    EvalResult res;
    res.outputs = l2_normalize(v, &n);
    auto [lv, grad_y] = loss(res.outputs);
    if (static_cast<int>(grad_y.size()) != embed_dim)
        throw std::invalid_argument("embedding: output gradient size mismatch");
    res.loss = lv;

    // d(v/||v||) adjoint: (g - y (y.g)) / ||v||
    double ydotg = 0.0;
    for (int k = 0; k < embed_dim; ++k) ydotg += res.outputs[k] * grad_y[k];
    std::vector<double> grad_v(embed_dim);
    for (int k = 0; k < embed_dim; ++k) grad_v[k] = (grad_y[k] - res.outputs[k] * ydotg) / n;

    std::vector<double> grad_feat(trunk.c2, 0.0);
    for (int k = 0; k < embed_dim; ++k) {
        double g = grad_v[k];
        if (g == 0.0) continue;
        const double* row = we.data() + static_cast<size_t>(k) * trunk.c2;
        for (int c = 0; c < trunk.c2; ++c) grad_feat[c] += g * row[c];
    }
    res.grad_input = trunk.backward_from_feat(a, grad_feat);
    return res;
}

TrainReport train_sgd(TinyCnn& model, const Dataset& data, int epochs, double lr, Rng& rng) {
    if (data.items.empty()) throw std::invalid_argument("train_sgd: empty dataset");
    for (const DataItem& it : data.items)
        if (it.label < 0 || it.label >= model.num_classes)
            throw std::invalid_argument("train_sgd: label out of range for model");

    TrainReport report;
    std::vector<int> order(data.items.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> gw1(model.w1.size()), gb1(model.b1.size());
    std::vector<double> gw2(model.w2.size()), gb2(model.b2.size());

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates with the shared rng keeps runs reproducible
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(i + 1)]);

        double epoch_loss = 0.0;
        for (int idx : order) {
            const DataItem& item = data.items[idx];
            TinyCnn::Acts a;
            model.run_forward(item.image, a);

            std::vector<double> logits(model.num_classes);
            for (int k = 0; k < model.num_classes; ++k) {
                double s = model.bf[k];
                const double* row = model.wf.data() + static_cast<size_t>(k) * model.c2;
                for (int c = 0; c < model.c2; ++c) s += row[c] * a.feat[c];
                logits[k] = s;
            }
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double v : logits) z += std::exp(v - mx);
            std::vector<double> grad_logits(model.num_classes);
            for (int k = 0; k < model.num_classes; ++k)
                grad_logits[k] = std::exp(logits[k] - mx) / z;
            epoch_loss += -(logits[item.label] - mx - std::log(z));
            grad_logits[item.label] -= 1.0;

            std::vector<double> grad_feat(model.c2, 0.0);
            for (int k = 0; k < model.num_classes; ++k) {
                double g = grad_logits[k];
                const double* row = model.wf.data() + static_cast<size_t>(k) * model.c2;
                for (int c = 0; c < model.c2; ++c) grad_feat[c] += g * row[c];
            }

            // dense layer update
            for (int k = 0; k < model.num_classes; ++k) {
                double g = grad_logits[k];
                double* row = model.wf.data() + static_cast<size_t>(k) * model.c2;
                for (int c = 0; c < model.c2; ++c) row[c] -= lr * g * a.feat[c];
                model.bf[k] -= lr * g;
            }

            // conv gradients
            size_t plane = static_cast<size_t>(a.H) * a.W;
            size_t plane2 = static_cast<size_t>(a.H2) * a.W2;
            double inv = 1.0 / static_cast<double>(plane2);
            std::vector<double> g_r2(static_cast<size_t>(model.c2) * plane2);
            for (int c = 0; c < model.c2; ++c) {
                double g = grad_feat[c] * inv;
                double* row = g_r2.data() + c * plane2;
                std::fill(row, row + plane2, g);
            }
            for (size_t i = 0; i < g_r2.size(); ++i)
                if (!(a.a2[i] > 0.0)) g_r2[i] = 0.0;

            std::fill(gw2.begin(), gw2.end(), 0.0);
            std::fill(gb2.begin(), gb2.end(), 0.0);
            conv3x3_backward_weights(a.p1.data(), g_r2.data(), model.c1, a.H2, a.W2, model.c2,
                                     gw2.data(), gb2.data());

            std::vector<double> g_p1(static_cast<size_t>(model.c1) * plane2);
            conv3x3_backward_data(g_r2.data(), model.c1, a.H2, a.W2, model.w2.data(), model.c2,
                                  g_p1.data());

            std::vector<double> g_r1(static_cast<size_t>(model.c1) * plane, 0.0);
            for (int c = 0; c < model.c1; ++c) {
                const double* gp = g_p1.data() + c * plane2;
                double* gr = g_r1.data() + c * plane;
                for (int y = 0; y < a.H2; ++y)
                    for (int x = 0; x < a.W2; ++x) {
                        double g = 0.25 * gp[static_cast<size_t>(y) * a.W2 + x];
                        double* q = gr + static_cast<size_t>(2 * y) * a.W + 2 * x;
                        q[0] += g;
                        q[1] += g;
                        q[a.W] += g;
                        q[a.W + 1] += g;
                    }
            }
            for (size_t i = 0; i < g_r1.size(); ++i)
                if (!(a.a1[i] > 0.0)) g_r1[i] = 0.0;

            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            conv3x3_backward_weights(a.x.data(), g_r1.data(), 3, a.H, a.W, model.c1, gw1.data(),
                                     gb1.data());

            for (size_t i = 0; i < model.w2.size(); ++i) model.w2[i] -= lr * gw2[i];
            for (size_t i = 0; i < model.b2.size(); ++i) model.b2[i] -= lr * gb2[i];
            for (size_t i = 0; i < model.w1.size(); ++i) model.w1[i] -= lr * gw1[i];
            for (size_t i = 0; i < model.b1.size(); ++i) model.b1[i] -= lr * gb1[i];
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(data.items.size()));
    }

    int correct = 0;
    for (const DataItem& item : data.items) {
        std::vector<double> logits = model.forward(item.image);
        int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == item.label) ++correct;
    }
    report.final_accuracy = static_cast<double>(correct) / static_cast<double>(data.items.size());
    return report;
}

} // namespace odi
