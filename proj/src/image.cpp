#include "odi/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odi {

Image Image::filled(int w, int h, double r, double g, double b) {
    Image img(w, h);
    for (size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

BilinearTaps bilinear_taps(int out_index, int in_size, int out_size) {
    double scale = static_cast<double>(in_size) / out_size;
    double src = (out_index + 0.5) * scale - 0.5;
    double f = std::floor(src);
    int i0 = static_cast<int>(f);
    double frac = src - f;
    int i1 = i0 + 1;
    // clamp taps to the image; weights unchanged so the map stays linear
    i0 = std::clamp(i0, 0, in_size - 1);
    i1 = std::clamp(i1, 0, in_size - 1);
    return {i0, i1, 1.0 - frac, frac};
}

Image bilinear_resize(const Image& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("bilinear_resize: target dimensions must be >= 1");
    if (img.width == out_w && img.height == out_h)
        return img; // exact identity, bit for bit

    Image out(out_w, out_h);
    std::vector<BilinearTaps> xt(out_w);
    for (int x = 0; x < out_w; ++x) xt[x] = bilinear_taps(x, img.width, out_w);
    for (int y = 0; y < out_h; ++y) {
        BilinearTaps ty = bilinear_taps(y, img.height, out_h);
        for (int x = 0; x < out_w; ++x) {
            const BilinearTaps& tx = xt[x];
            for (int c = 0; c < 3; ++c) {
                double v = ty.w0 * (tx.w0 * img.at(tx.i0, ty.i0, c) + tx.w1 * img.at(tx.i1, ty.i0, c)) +
                           ty.w1 * (tx.w0 * img.at(tx.i0, ty.i1, c) + tx.w1 * img.at(tx.i1, ty.i1, c));
                out.at(x, y, c) = v;
            }
        }
    }
    return out;
}

GradientField bilinear_resize_adjoint(const GradientField& grad_out, int in_w, int in_h) {
    GradientField grad_in(in_w, in_h);
    if (grad_out.width == in_w && grad_out.height == in_h) {
        grad_in.data = grad_out.data;
        return grad_in;
    }
    std::vector<BilinearTaps> xt(grad_out.width);
    for (int x = 0; x < grad_out.width; ++x) xt[x] = bilinear_taps(x, in_w, grad_out.width);
    for (int y = 0; y < grad_out.height; ++y) {
        BilinearTaps ty = bilinear_taps(y, in_h, grad_out.height);
        for (int x = 0; x < grad_out.width; ++x) {
            const BilinearTaps& tx = xt[x];
            for (int c = 0; c < 3; ++c) {
                double g = grad_out.at(x, y, c);
                grad_in.at(tx.i0, ty.i0, c) += ty.w0 * tx.w0 * g;
                grad_in.at(tx.i1, ty.i0, c) += ty.w0 * tx.w1 * g;
                grad_in.at(tx.i0, ty.i1, c) += ty.w1 * tx.w0 * g;
                grad_in.at(tx.i1, ty.i1, c) += ty.w1 * tx.w1 * g;
            }
        }
    }
    return grad_in;
}

Kernel gaussian_kernel_any(int size, double sigma) {
    if (size < 1) throw std::invalid_argument("gaussian kernel: size must be >= 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma must be positive");
    Kernel k;
    k.size = size;
    k.weights.resize(static_cast<size_t>(size) * size);
    double center = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double dx = x - center;
            double dy = y - center;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k.weights[static_cast<size_t>(y) * size + x] = w;
            sum += w;
        }
    }
    for (double& w : k.weights) w /= sum;
    return k;
}

Kernel gaussian_kernel(int size, double sigma) {
    if (size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd");
    return gaussian_kernel_any(size, sigma);
}

namespace {

// Shared correlation core; `flip` runs the adjoint (kernel rotated 180 deg).
void correlate(const double* in, int w, int h, const Kernel& k, bool flip, double* out) {
    int n = k.size;
    // offsets relative to the kernel center; for even sizes the trailing
    // offset reaches one further than the leading one
    int lead = (n - 1) / 2;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0;
            for (int ky = 0; ky < n; ++ky) {
                int sy = flip ? y - (ky - lead) : y + (ky - lead);
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < n; ++kx) {
                    int sx = flip ? x - (kx - lead) : x + (kx - lead);
                    if (sx < 0 || sx >= w) continue;
                    double wv = k.weights[static_cast<size_t>(ky) * n + kx];
                    const double* p = in + (static_cast<size_t>(sy) * w + sx) * 3;
                    acc0 += wv * p[0];
                    acc1 += wv * p[1];
                    acc2 += wv * p[2];
                }
            }
            double* q = out + (static_cast<size_t>(y) * w + x) * 3;
            q[0] = acc0;
            q[1] = acc1;
            q[2] = acc2;
        }
    }
}

} // namespace

GradientField conv2d_same(const GradientField& g, const Kernel& k) {
    if (k.size == 1) {
        GradientField out = g;
        if (k.weights[0] != 1.0)
            for (double& v : out.data) v *= k.weights[0];
        return out;
    }
    GradientField out(g.width, g.height);
    correlate(g.data.data(), g.width, g.height, k, false, out.data.data());
    return out;
}

Image conv2d_same(const Image& img, const Kernel& k) {
    if (k.size == 1 && k.weights[0] == 1.0) return img;
    Image out(img.width, img.height);
    correlate(img.data.data(), img.width, img.height, k, false, out.data.data());
    return out;
}

GradientField conv2d_same_adjoint(const GradientField& g, const Kernel& k) {
    if (k.size == 1) return conv2d_same(g, k);
    GradientField out(g.width, g.height);
    correlate(g.data.data(), g.width, g.height, k, true, out.data.data());
    return out;
}

Image gaussian_blur_image(const Image& img, int size, double sigma) {
    Kernel k = gaussian_kernel_any(size, sigma);
    if (k.size == 1) return img;
    Image out = conv2d_same(img, k);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Image clip_linf(const Image& x_adv, const Image& x_orig, double eps) {
    if (!x_adv.same_shape(x_orig))
        throw std::invalid_argument("clip_linf: shape mismatch");
    if (eps < 0.0) throw std::invalid_argument("clip_linf: eps must be >= 0");
    Image out(x_adv.width, x_adv.height);
    for (size_t i = 0; i < out.data.size(); ++i) {
        double lo = std::max(x_orig.data[i] - eps, 0.0);
        double hi = std::min(x_orig.data[i] + eps, 1.0);
        out.data[i] = std::min(std::max(x_adv.data[i], lo), hi);
    }
    return out;
}

double l1_norm(const GradientField& g) {
    double n = 0.0;
    for (double v : g.data) n += std::fabs(v);
    return n;
}

GradientField l1_normalize(const GradientField& g) {
    double n = l1_norm(g);
    if (n == 0.0) throw std::domain_error("l1_normalize: zero gradient");
    GradientField out(g.width, g.height);
    for (size_t i = 0; i < g.data.size(); ++i) out.data[i] = g.data[i] / n;
    return out;
}

GradientField sign_field(const GradientField& g) {
    GradientField out(g.width, g.height);
    for (size_t i = 0; i < g.data.size(); ++i) {
        double v = g.data[i];
        out.data[i] = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

} // namespace odi
