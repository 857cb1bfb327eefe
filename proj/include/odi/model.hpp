#ifndef ODI_MODEL_HPP
#define ODI_MODEL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "odi/image.hpp"
#include "odi/rng.hpp"

namespace odi {

// Maps final network outputs to (loss value, gradient w.r.t. outputs).
using LossFn =
    std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>;

struct EvalResult {
    std::vector<double> outputs;
    double loss = 0.0;
    GradientField grad_input;
};

// Differentiable network contract: deterministic forward on any input at or
// above the minimum size, with an exact input gradient.
class DifferentiableModel {
public:
    virtual ~DifferentiableModel() = default;
    virtual int num_outputs() const = 0;
    virtual int min_input_size() const = 0;

    // kink_signature, when non-null, receives a hash of the ReLU activation
    // pattern so finite-difference probes can detect kink crossings.
    virtual std::vector<double> forward(const Image& x, uint64_t* kink_signature = nullptr) const = 0;

    // Runs forward once, obtains the output gradient from `loss`, and
    // backpropagates it to the input.
    virtual EvalResult forward_backward(const Image& x, const LossFn& loss) const = 0;

    // Convenience: fixed output gradient.
    EvalResult forward_backward(const Image& x, const std::vector<double>& grad_outputs) const;
};

// conv 3->c1 3x3 pad 1, relu, avgpool 2x2, conv c1->c2 3x3 pad 1, relu,
// global average pool, dense c2->num_classes. Global pooling makes the net
// size-agnostic down to 8x8 inputs.
class TinyCnn : public DifferentiableModel {
public:
    int c1 = 16, c2 = 32, num_classes = 8;
    std::vector<double> w1, b1; // [c1][3][3][3], [c1]
    std::vector<double> w2, b2; // [c2][c1][3][3], [c2]
    std::vector<double> wf, bf; // [num_classes][c2], [num_classes]

    TinyCnn() = default;
    TinyCnn(int c1_, int c2_, int classes);
    static TinyCnn random_init(int c1, int c2, int classes, uint64_t seed);

    int num_outputs() const override { return num_classes; }
    int min_input_size() const override { return 8; }
    std::vector<double> forward(const Image& x, uint64_t* kink_signature = nullptr) const override;
    EvalResult forward_backward(const Image& x, const LossFn& loss) const override;
    using DifferentiableModel::forward_backward;

    size_t parameter_count() const;

    // internal activations, shared with the embedding head and the trainer
    struct Acts;
    void run_forward(const Image& x, Acts& a) const;
    GradientField backward_from_feat(const Acts& a, const std::vector<double>& grad_feat) const;
};

// Frozen trunk of a trained classifier plus a seeded dense projection to a
// unit-norm feature vector; exists to exercise the feature-distance losses.
class TinyCnnEmbedding : public DifferentiableModel {
public:
    TinyCnn trunk; // classifier head unused
    int embed_dim = 32;
    std::vector<double> we, be; // [embed_dim][c2], [embed_dim]

    static TinyCnnEmbedding from_classifier(const TinyCnn& trained, uint64_t seed);

    int num_outputs() const override { return embed_dim; }
    int min_input_size() const override { return 8; }
    std::vector<double> forward(const Image& x, uint64_t* kink_signature = nullptr) const override;
    EvalResult forward_backward(const Image& x, const LossFn& loss) const override;
    using DifferentiableModel::forward_backward;
};

// ---- datasets ----

struct DataItem {
    std::string id;
    Image image;
    int label = 0;
    int target = 0; // attack target class, != label
};

struct Dataset {
    std::vector<DataItem> items;
    int num_classes = 0;
};

// Colored geometric glyphs on noisy gray backgrounds; classes come in hue
// pairs that differ by shape so networks have to look beyond color.
Dataset gen_synthetic_dataset(int classes, int per_class, int size, Rng& rng);

// index.csv (image_id,true_label,target_class) plus <image_id>.png files.
void save_dataset(const std::string& dir, const Dataset& ds);

// ---- training ----

struct TrainReport {
    double final_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

// Plain SGD with cross-entropy, one sample per step, deterministic shuffle.
TrainReport train_sgd(TinyCnn& model, const Dataset& data, int epochs, double lr, Rng& rng);

// ---- weight files ----
// Binary: magic "ODIW", u32 version, kind string, layer manifest
// (name + shape), payload of little-endian f64 in manifest order.

void save_weights(const std::string& path, const TinyCnn& model);
void save_weights(const std::string& path, const TinyCnnEmbedding& model);
TinyCnn load_classifier_weights(const std::string& path);
TinyCnnEmbedding load_embedding_weights(const std::string& path);

} // namespace odi

#endif
