#ifndef ODI_TRANSFORMS_HPP
#define ODI_TRANSFORMS_HPP

#include <string>

#include "odi/image.hpp"
#include "odi/renderer.hpp"
#include "odi/rng.hpp"
#include "odi/scene.hpp"

namespace odi {

enum class TransformKind { identity, di, rdi, odi };

TransformKind transform_kind_from_string(const std::string& s);
std::string to_string(TransformKind k);

// Selection + parameters for the input diversification applied before each
// gradient evaluation. `pool` and `scene` must outlive the params when the
// kind is odi.
struct TransformParams {
    TransformKind kind = TransformKind::identity;
    double di_prob = 0.7;    // DI apply probability
    int di_max_size = 84;    // enlarged canvas for DI
    int rdi_max_size = 88;   // enlarged canvas for RDI (resized back afterwards)
    const ObjectPool* pool = nullptr;
    const SceneConfig* scene = nullptr;

    void validate(int input_size) const;
};

// Resize-and-pad randomness of one DI/RDI draw.
struct DiRecord {
    bool applied = false; // DI only: the no-op branch keeps the input
    int in_w = 0, in_h = 0;
    int resized = 0;
    int off_x = 0, off_y = 0;
    int max_size = 0;
    bool resize_back = false; // RDI
};

struct TransformRecord {
    TransformKind kind = TransformKind::identity;
    int in_w = 0, in_h = 0;
    DiRecord di;
    OdiRecord odi;
};

struct TransformResult {
    Image out;
    TransformRecord rec;
};

// Deterministic core of DI given the draw (r, off). Exposed so tests can
// force specific draws.
Image di_apply(const Image& x, int resized, int off_x, int off_y, int max_size);

TransformResult di_forward(const Image& x, double p, int max_size, Rng& rng);
TransformResult rdi_forward(const Image& x, int max_size, Rng& rng);

// Draws fresh randomness (one scene sample / one DI draw) and applies it.
TransformResult apply_transform(const TransformParams& params, const Image& x, Rng& rng);

// Exact adjoint of the linearization captured by the record.
GradientField transform_backward(const TransformRecord& rec, const GradientField& grad_out);

// Re-applies the recorded draw to an arbitrary image of the original shape.
Image transform_replay(const TransformRecord& rec, const Image& x);

} // namespace odi

#endif
