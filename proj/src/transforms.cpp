#include "odi/transforms.hpp"

#include <stdexcept>

namespace odi {

TransformKind transform_kind_from_string(const std::string& s) {
    if (s == "identity") return TransformKind::identity;
    if (s == "di") return TransformKind::di;
    if (s == "rdi") return TransformKind::rdi;
    if (s == "odi") return TransformKind::odi;
    throw std::runtime_error("unknown transform kind: " + s);
}

std::string to_string(TransformKind k) {
    switch (k) {
        case TransformKind::identity: return "identity";
        case TransformKind::di: return "di";
        case TransformKind::rdi: return "rdi";
        case TransformKind::odi: return "odi";
    }
    return "?";
}

void TransformParams::validate(int input_size) const {
    if (kind == TransformKind::di) {
        if (di_prob < 0.0 || di_prob > 1.0) throw std::invalid_argument("di: p must be in [0,1]");
        if (di_max_size < input_size) throw std::invalid_argument("di: max_size below input size");
    } else if (kind == TransformKind::rdi) {
        if (rdi_max_size < input_size) throw std::invalid_argument("rdi: max_size below input size");
    } else if (kind == TransformKind::odi) {
        if (!pool || !scene) throw std::invalid_argument("odi transform: pool/scene not set");
    }
}

Image di_apply(const Image& x, int resized, int off_x, int off_y, int max_size) {
    if (resized < 1 || off_x < 0 || off_y < 0 || off_x + resized > max_size || off_y + resized > max_size)
        throw std::invalid_argument("di_apply: placement outside canvas");
    Image small = bilinear_resize(x, resized, resized);
    Image out(max_size, max_size); // zero padding
    for (int y = 0; y < resized; ++y)
        for (int xx = 0; xx < resized; ++xx)
            for (int c = 0; c < 3; ++c)
                out.at(off_x + xx, off_y + y, c) = small.at(xx, y, c);
    return out;
}

namespace {

DiRecord draw_di(const Image& x, int max_size, Rng& rng) {
    if (x.width != x.height)
        throw std::invalid_argument("di/rdi: square input required");
    DiRecord rec;
    rec.applied = true;
    rec.in_w = x.width;
    rec.in_h = x.height;
    rec.max_size = max_size;
    int span = max_size - x.width; // r in [size, max_size)
    rec.resized = x.width + (span > 0 ? rng.uniform_int(span) : 0);
    rec.off_x = rng.uniform_int(max_size - rec.resized + 1);
    rec.off_y = rng.uniform_int(max_size - rec.resized + 1);
    return rec;
}

} // namespace

TransformResult di_forward(const Image& x, double p, int max_size, Rng& rng) {
    if (max_size < x.width || max_size < x.height)
        throw std::invalid_argument("di: max_size below input size");
    TransformResult res;
    res.rec.kind = TransformKind::di;
    res.rec.in_w = x.width;
    res.rec.in_h = x.height;
    if (rng.uniform() < p) {
        res.rec.di = draw_di(x, max_size, rng);
        res.out = di_apply(x, res.rec.di.resized, res.rec.di.off_x, res.rec.di.off_y, max_size);
    } else {
        res.rec.di.applied = false;
        res.rec.di.in_w = x.width;
        res.rec.di.in_h = x.height;
        res.out = x;
    }
    return res;
}

TransformResult rdi_forward(const Image& x, int max_size, Rng& rng) {
    if (max_size < x.width || max_size < x.height)
        throw std::invalid_argument("rdi: max_size below input size");
    TransformResult res;
    res.rec.kind = TransformKind::rdi;
    res.rec.in_w = x.width;
    res.rec.in_h = x.height;
    res.rec.di = draw_di(x, max_size, rng);
    res.rec.di.resize_back = true;
    Image padded = di_apply(x, res.rec.di.resized, res.rec.di.off_x, res.rec.di.off_y, max_size);
    res.out = bilinear_resize(padded, x.width, x.height);
    return res;
}

TransformResult apply_transform(const TransformParams& params, const Image& x, Rng& rng) {
    params.validate(std::max(x.width, x.height));
    switch (params.kind) {
        case TransformKind::identity: {
            TransformResult res;
            res.rec.kind = TransformKind::identity;
            res.rec.in_w = x.width;
            res.rec.in_h = x.height;
            res.out = x;
            return res;
        }
        case TransformKind::di:
            return di_forward(x, params.di_prob, params.di_max_size, rng);
        case TransformKind::rdi:
            return rdi_forward(x, params.rdi_max_size, rng);
        case TransformKind::odi: {
            SceneSample sample = sample_scene(rng, *params.scene, *params.pool);
            TransformResult res;
            res.rec.kind = TransformKind::odi;
            res.rec.in_w = x.width;
            res.rec.in_h = x.height;
            auto [out, rec] = odi_forward(x, sample, *params.pool, *params.scene);
            res.out = std::move(out);
            res.rec.odi = std::move(rec);
            return res;
        }
    }
    throw std::logic_error("apply_transform: bad kind");
}

namespace {

GradientField di_backward(const DiRecord& rec, const GradientField& grad_out) {
    if (!rec.applied) return grad_out;
    GradientField g_padded = grad_out;
    if (rec.resize_back) {
        if (grad_out.width != rec.in_w || grad_out.height != rec.in_h)
            throw std::invalid_argument("transform_backward: gradient shape mismatch");
        g_padded = bilinear_resize_adjoint(grad_out, rec.max_size, rec.max_size);
    } else if (grad_out.width != rec.max_size || grad_out.height != rec.max_size) {
        throw std::invalid_argument("transform_backward: gradient shape mismatch");
    }
    GradientField g_small(rec.resized, rec.resized);
    for (int y = 0; y < rec.resized; ++y)
        for (int x = 0; x < rec.resized; ++x)
            for (int c = 0; c < 3; ++c)
                g_small.at(x, y, c) = g_padded.at(rec.off_x + x, rec.off_y + y, c);
    return bilinear_resize_adjoint(g_small, rec.in_w, rec.in_h);
}

} // namespace

GradientField transform_backward(const TransformRecord& rec, const GradientField& grad_out) {
    switch (rec.kind) {
        case TransformKind::identity:
            if (grad_out.width != rec.in_w || grad_out.height != rec.in_h)
                throw std::invalid_argument("transform_backward: gradient shape mismatch");
            return grad_out;
        case TransformKind::di:
        case TransformKind::rdi:
            return di_backward(rec.di, grad_out);
        case TransformKind::odi:
            return odi_backward(rec.odi, grad_out);
    }
    throw std::logic_error("transform_backward: bad kind");
}

Image transform_replay(const TransformRecord& rec, const Image& x) {
    switch (rec.kind) {
        case TransformKind::identity:
            return x;
        case TransformKind::di: {
            if (!rec.di.applied) return x;
            return di_apply(x, rec.di.resized, rec.di.off_x, rec.di.off_y, rec.di.max_size);
        }
        case TransformKind::rdi: {
            Image padded = di_apply(x, rec.di.resized, rec.di.off_x, rec.di.off_y, rec.di.max_size);
            return bilinear_resize(padded, rec.in_w, rec.in_h);
        }
        case TransformKind::odi:
            return odi_replay(rec.odi, x);
    }
    throw std::logic_error("transform_replay: bad kind");
}

} // namespace odi
