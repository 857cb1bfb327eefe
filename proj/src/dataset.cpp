#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "odi/model.hpp"
#include "odi/png_io.hpp"

namespace odi {

namespace {

// Classes are low-contrast: a faint class hue plus a shape, both riding on a
// mid-gray background. Hue directions come in nearby pairs (square/circle,
// triangle/diamond, plus/ring, hbars/checker) so color mostly identifies the
// pair and shape settles the member. The small amplitude keeps the trained
// decision boundaries within reach of an l-inf ball of a few times 1/255,
// which is what makes the attack experiments meaningful at 16/255.
const double kHueAngles[8] = {-0.25, 0.25, 1.32, 1.82, 2.89, 3.39, 4.46, 4.96};
const double kGlyphAmplitude = 0.10;

void class_direction(int label, double dir[3]) {
    double a = kHueAngles[label];
    // unit-power color direction on the rgb "hue wheel"
    dir[0] = std::cos(a);
    dir[1] = std::cos(a - 2.0943951023931953);
    dir[2] = std::cos(a + 2.0943951023931953);
}

bool inside_shape(int shape, double qx, double qy) {
    switch (shape) {
        case 0: // square
            return std::max(std::fabs(qx), std::fabs(qy)) <= 0.80;
        case 1: // circle
            return qx * qx + qy * qy <= 0.85 * 0.85;
        case 2: { // triangle, apex up
            if (qy < -0.70 || qy > 0.90) return false;
            double half = 0.90 * (0.90 - qy) / 1.60;
            return std::fabs(qx) <= half;
        }
        case 3: // diamond
            return std::fabs(qx) + std::fabs(qy) <= 0.90;
        case 4: // plus
            return (std::fabs(qx) <= 0.32 && std::fabs(qy) <= 0.90) ||
                   (std::fabs(qy) <= 0.32 && std::fabs(qx) <= 0.90);
        case 5: { // ring
            double r2 = qx * qx + qy * qy;
            return r2 >= 0.45 * 0.45 && r2 <= 0.85 * 0.85;
        }
        case 6: { // horizontal bars
            if (std::fabs(qx) > 0.85 || std::fabs(qy) > 0.90) return false;
            int band = static_cast<int>(std::floor((qy + 0.90) / 0.36));
            return band % 2 == 0;
        }
        case 7: { // checker
            if (std::fabs(qx) > 0.90 || std::fabs(qy) > 0.90) return false;
            int bx = static_cast<int>(std::floor((qx + 0.90) / 0.45));
            int by = static_cast<int>(std::floor((qy + 0.90) / 0.45));
            return (bx + by) % 2 == 0;
        }
        default:
            return false;
    }
}

} // namespace

Dataset gen_synthetic_dataset(int classes, int per_class, int size, Rng& rng) {
    if (classes < 2 || classes > 8) throw std::invalid_argument("gen_synthetic_dataset: classes must be in [2,8]");
    if (per_class < 1) throw std::invalid_argument("gen_synthetic_dataset: per_class must be >= 1");
    if (size < 64) throw std::invalid_argument("gen_synthetic_dataset: size must be >= 64");

    Dataset ds;
    ds.num_classes = classes;
    int total = classes * per_class;
    ds.items.reserve(total);

    for (int i = 0; i < total; ++i) {
        int label = i % classes;
        DataItem item;
        char id[32];
        std::snprintf(id, sizeof(id), "img_%05d", i);
        item.id = id;
        item.label = label;

        double bg = rng.uniform(0.38, 0.62);
        double cx = size * (0.5 + rng.uniform(-0.10, 0.10));
        double cy = size * (0.5 + rng.uniform(-0.10, 0.10));
        double half = size * rng.uniform(0.34, 0.46);
        double rot = rng.uniform(-0.22, 0.22);
        double amp = kGlyphAmplitude * rng.uniform(0.85, 1.15);
        double dir[3];
        class_direction(label, dir);

        Image img(size, size);
        double cs = std::cos(rot), sn = std::sin(rot);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double base = bg + rng.uniform(-0.03, 0.03);
                // 3x3 supersampled coverage
                int hits = 0;
                for (int sy = 0; sy < 3; ++sy)
                    for (int sx = 0; sx < 3; ++sx) {
                        double px = x + (sx + 0.5) / 3.0 - cx;
                        double py = y + (sy + 0.5) / 3.0 - cy;
                        double qx = (cs * px + sn * py) / half;
                        double qy = (-sn * px + cs * py) / half;
                        if (inside_shape(label, qx, qy)) ++hits;
                    }
                double cov = hits / 9.0;
                for (int c = 0; c < 3; ++c)
                    img.at(x, y, c) = std::clamp(base + cov * amp * dir[c], 0.0, 1.0);
            }
        }
        item.image = std::move(img);
        int t = rng.uniform_int(classes - 1);
        item.target = t >= label ? t + 1 : t;
        ds.items.push_back(std::move(item));
    }
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/index.csv");
    if (!csv) throw std::runtime_error("save_dataset: cannot write index.csv in " + dir);
    csv << "image_id,true_label,target_class\n";
    for (const DataItem& item : ds.items) {
        write_png(dir + "/" + item.id + ".png", item.image);
        csv << item.id << "," << item.label << "," << item.target << "\n";
    }
    if (!csv) throw std::runtime_error("save_dataset: write failed in " + dir);
}

} // namespace odi
