#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "odi/model.hpp"
#include "odi/png_io.hpp"
#include "odi/rng.hpp"

using namespace odi;

namespace {

Image ramp_image(int w, int h) {
    Image img(w, h);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<double>(i) / static_cast<double>(img.data.size() - 1);
    return img;
}

Image random_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Image img(w, h);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

} // namespace

TEST_CASE("tinycnn: zero weights give zero logits") {
    TinyCnn m(4, 6, 5); // all zeros
    Image x = ramp_image(16, 16);
    std::vector<double> logits = m.forward(x);
    REQUIRE(logits.size() == 5);
    for (double v : logits) CHECK(v == 0.0);
}

TEST_CASE("tinycnn: golden logits are bit-stable") {
    TinyCnn m = TinyCnn::random_init(8, 12, 4, 77);
    Image x = ramp_image(16, 16);
    std::vector<double> logits = m.forward(x);
    REQUIRE(logits.size() == 4);
    // recorded once from this implementation's double-precision forward
    const double golden[4] = {
        0.059640686540240267,
        -0.025028249706598039,
        0.069653350982702644,
        0.0032795155485602061,
    };
    for (int k = 0; k < 4; ++k) CHECK(logits[k] == golden[k]);
}

TEST_CASE("tinycnn: permuting dense rows permutes logits") {
    TinyCnn m = TinyCnn::random_init(6, 8, 3, 123);
    Image x = ramp_image(12, 12);
    std::vector<double> before = m.forward(x);

    TinyCnn p = m;
    // rotate rows 0<-1<-2<-0
    for (int c = 0; c < p.c2; ++c) {
        p.wf[0 * p.c2 + c] = m.wf[1 * p.c2 + c];
        p.wf[1 * p.c2 + c] = m.wf[2 * p.c2 + c];
        p.wf[2 * p.c2 + c] = m.wf[0 * p.c2 + c];
    }
    p.bf = {m.bf[1], m.bf[2], m.bf[0]};
    std::vector<double> after = p.forward(x);
    CHECK(after[0] == before[1]);
    CHECK(after[1] == before[2]);
    CHECK(after[2] == before[0]);
}

TEST_CASE("tinycnn: input gradient matches finite differences away from kinks") {
    TinyCnn m = TinyCnn::random_init(6, 8, 4, 2024);
    Rng rng(55);
    Image x = random_image(12, 12, rng, 0.1, 0.9);
    std::vector<double> grad_logits = {0.7, -0.3, 0.5, -0.9};
    EvalResult res = m.forward_backward(x, grad_logits);

    auto scalar = [&](const Image& in, uint64_t* sig) {
        std::vector<double> l = m.forward(in, sig);
        double s = 0.0;
        for (size_t k = 0; k < l.size(); ++k) s += l[k] * grad_logits[k];
        return s;
    };
    const double h = 1e-5;
    int checked = 0;
    for (int probe = 0; probe < 200 && checked < 60; ++probe) {
        size_t idx = static_cast<size_t>(rng.uniform() * x.data.size());
        Image xp = x, xm = x;
        xp.data[idx] += h;
        xm.data[idx] -= h;
        uint64_t sp = 0, sm = 0;
        double fp = scalar(xp, &sp), fm = scalar(xm, &sm);
        if (sp != sm) continue; // kink crossed; resample
        ++checked;
        double fd = (fp - fm) / (2 * h);
        double a = res.grad_input.data[idx];
        double denom = std::max({std::fabs(fd), std::fabs(a), 1e-9});
        CHECK(std::fabs(fd - a) / denom <= 1e-6);
    }
    CHECK(checked >= 50);
}

TEST_CASE("tinycnn: zero output gradient gives zero input gradient; backward is linear in it") {
    TinyCnn m = TinyCnn::random_init(4, 6, 3, 9);
    Rng rng(10);
    Image x = random_image(10, 10, rng);
    EvalResult z = m.forward_backward(x, std::vector<double>{0.0, 0.0, 0.0});
    for (double v : z.grad_input.data) CHECK(v == 0.0);

    std::vector<double> g1 = {1.0, 0.0, -2.0};
    std::vector<double> g2 = {0.5, -1.5, 0.25};
    std::vector<double> gsum(3);
    for (int k = 0; k < 3; ++k) gsum[k] = 2.0 * g1[k] + 3.0 * g2[k];
    EvalResult r1 = m.forward_backward(x, g1);
    EvalResult r2 = m.forward_backward(x, g2);
    EvalResult rs = m.forward_backward(x, gsum);
    for (size_t i = 0; i < rs.grad_input.data.size(); ++i)
        CHECK(rs.grad_input.data[i] ==
              doctest::Approx(2.0 * r1.grad_input.data[i] + 3.0 * r2.grad_input.data[i])
                  .epsilon(1e-12));
}

TEST_CASE("tinycnn accepts 64x64 and the 84x84 padded variant, rejects undersized") {
    TinyCnn m = TinyCnn::random_init(4, 6, 3, 1);
    Rng rng(2);
    CHECK_NOTHROW(m.forward(random_image(64, 64, rng)));
    CHECK_NOTHROW(m.forward(random_image(84, 84, rng)));
    CHECK_NOTHROW(m.forward(random_image(8, 8, rng)));
    CHECK_NOTHROW(m.forward(random_image(9, 13, rng))); // odd sizes pool by floor
    CHECK_THROWS(m.forward(random_image(7, 64, rng)));
    CHECK_THROWS(m.forward(random_image(64, 7, rng)));
}

TEST_CASE("train_sgd: one step on one sample decreases that sample's loss") {
    Rng rng(31);
    Dataset ds;
    ds.num_classes = 3;
    DataItem item;
    item.id = "a";
    item.image = random_image(16, 16, rng, 0.2, 0.8);
    item.label = 1;
    item.target = 0;
    ds.items.push_back(item);

    TinyCnn m = TinyCnn::random_init(4, 6, 3, 11);
    auto ce = [&](const TinyCnn& model) {
        std::vector<double> l = model.forward(ds.items[0].image);
        double mx = *std::max_element(l.begin(), l.end());
        double z = 0.0;
        for (double v : l) z += std::exp(v - mx);
        return -(l[1] - mx - std::log(z));
    };
    double before = ce(m);
    Rng trng(1);
    train_sgd(m, ds, 1, 0.01, trng);
    CHECK(ce(m) < before);
}

TEST_CASE("train_sgd: same seed reproduces identical weights") {
    Rng rng(77);
    Dataset ds = gen_synthetic_dataset(4, 3, 64, rng);
    TinyCnn a = TinyCnn::random_init(4, 6, 4, 5);
    TinyCnn b = TinyCnn::random_init(4, 6, 4, 5);
    Rng ra(9), rb(9);
    train_sgd(a, ds, 2, 0.05, ra);
    train_sgd(b, ds, 2, 0.05, rb);
    CHECK(a.w1 == b.w1);
    CHECK(a.w2 == b.w2);
    CHECK(a.wf == b.wf);
    CHECK(a.bf == b.bf);
}

TEST_CASE("train_sgd: rejects empty datasets and bad labels") {
    TinyCnn m = TinyCnn::random_init(4, 6, 3, 5);
    Dataset empty;
    Rng rng(1);
    CHECK_THROWS(train_sgd(m, empty, 1, 0.1, rng));
    Rng rng2(2);
    Dataset bad;
    bad.num_classes = 5;
    DataItem it;
    it.image = Image::filled(16, 16, 0.5, 0.5, 0.5);
    it.label = 4; // model has 3 classes
    bad.items.push_back(it);
    CHECK_THROWS(train_sgd(m, bad, 1, 0.1, rng2));
}

TEST_CASE("a small synthetic set trains to at least 90% within 20 epochs") {
    Rng rng(808);
    Dataset ds = gen_synthetic_dataset(8, 10, 64, rng);
    TinyCnn m = TinyCnn::random_init(16, 32, 8, 42);
    Rng trng(4242);
    TrainReport rep = train_sgd(m, ds, 20, 0.1, trng);
    CHECK(rep.final_accuracy >= 0.90);
}

TEST_CASE("gen_synthetic_dataset: uniform labels, targets differ, reproducible") {
    Rng r1(3), r2(3);
    Dataset a = gen_synthetic_dataset(8, 4, 64, r1);
    Dataset b = gen_synthetic_dataset(8, 4, 64, r2);
    REQUIRE(a.items.size() == 32);
    std::vector<int> hist(8, 0);
    for (size_t i = 0; i < a.items.size(); ++i) {
        const DataItem& it = a.items[i];
        ++hist[it.label];
        CHECK(it.target != it.label);
        CHECK(it.target >= 0);
        CHECK(it.target < 8);
        CHECK(it.image.data == b.items[i].image.data); // bit-identical
        for (double v : it.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    for (int h : hist) CHECK(h == 4);
    CHECK_THROWS(gen_synthetic_dataset(8, 4, 32, r1)); // below minimum size
}

TEST_CASE("save_dataset then reload round-trips ids and labels") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "odi_ds_roundtrip";
    fs::remove_all(dir);
    Rng rng(12);
    Dataset ds = gen_synthetic_dataset(4, 2, 64, rng);
    save_dataset(dir.string(), ds);
    CHECK(fs::exists(dir / "index.csv"));
    for (const DataItem& it : ds.items) CHECK(fs::exists(dir / (it.id + ".png")));
    // quantization error stays below half a step
    Image back = read_png((dir / (ds.items[0].id + ".png")).string());
    for (size_t i = 0; i < back.data.size(); ++i)
        CHECK(std::fabs(back.data[i] - ds.items[0].image.data[i]) <= 0.5 / 255.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("weight files: save-load-save produces identical bytes") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "odi_weights";
    fs::create_directories(dir);
    TinyCnn m = TinyCnn::random_init(5, 7, 4, 99);
    std::string p1 = (dir / "a.odiw").string(), p2 = (dir / "b.odiw").string();
    save_weights(p1, m);
    TinyCnn loaded = load_classifier_weights(p1);
    CHECK(loaded.c1 == 5);
    CHECK(loaded.c2 == 7);
    CHECK(loaded.num_classes == 4);
    CHECK(loaded.w1 == m.w1);
    CHECK(loaded.wf == m.wf);
    save_weights(p2, loaded);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    fs::remove_all(dir);
}

TEST_CASE("weight files: truncation and bad magic are rejected") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "odi_weights_bad";
    fs::create_directories(dir);
    TinyCnn m = TinyCnn::random_init(3, 4, 2, 7);
    std::string good = (dir / "good.odiw").string();
    save_weights(good, m);

    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    std::string truncated = (dir / "trunc.odiw").string();
    std::ofstream t(truncated, std::ios::binary);
    t.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    t.close();
    CHECK_THROWS(load_classifier_weights(truncated));

    std::string badmagic = (dir / "magic.odiw").string();
    bytes[0] = 'X';
    std::ofstream b(badmagic, std::ios::binary);
    b.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    b.close();
    CHECK_THROWS(load_classifier_weights(badmagic));
    fs::remove_all(dir);
}

TEST_CASE("weight files: payload doubles are little-endian") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "odi_weights_le";
    fs::create_directories(dir);
    TinyCnn m(1, 1, 1);
    m.w1[0] = 1.0; // 0x3FF0000000000000
    std::string path = (dir / "le.odiw").string();
    save_weights(path, m);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // payload is the trailing 47 doubles (27+1+9+1+1+1... per manifest);
    // total parameters: w1 27, b1 1, w2 9, b2 1, wf 1, bf 1 = 40 doubles
    size_t payload = 40 * 8;
    REQUIRE(bytes.size() > payload);
    size_t start = bytes.size() - payload;
    // first payload value is w1[0] == 1.0 -> bytes 00..00 F0 3F
    const unsigned char expect[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    for (int i = 0; i < 8; ++i)
        CHECK(static_cast<unsigned char>(bytes[start + i]) == expect[i]);
    fs::remove_all(dir);
}

TEST_CASE("embedding model: unit norm outputs and exact backward") {
    Rng rng(21);
    TinyCnn trunk = TinyCnn::random_init(6, 8, 4, 33);
    TinyCnnEmbedding emb = TinyCnnEmbedding::from_classifier(trunk, 44);
    Image x = random_image(16, 16, rng, 0.1, 0.9);
    std::vector<double> e = emb.forward(x);
    REQUIRE(static_cast<int>(e.size()) == emb.embed_dim);
    double n2 = 0.0;
    for (double v : e) n2 += v * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-12));

    // finite differences through the normalized embedding
    std::vector<double> gout(emb.embed_dim);
    for (double& v : gout) v = rng.uniform(-1.0, 1.0);
    EvalResult res = emb.forward_backward(x, gout);
    auto scalar = [&](const Image& in, uint64_t* sig) {
        std::vector<double> v = emb.forward(in, sig);
        double s = 0.0;
        for (size_t k = 0; k < v.size(); ++k) s += v[k] * gout[k];
        return s;
    };
    const double h = 1e-5;
    int checked = 0;
    for (int probe = 0; probe < 100 && checked < 30; ++probe) {
        size_t idx = static_cast<size_t>(rng.uniform() * x.data.size());
        Image xp = x, xm = x;
        xp.data[idx] += h;
        xm.data[idx] -= h;
        uint64_t sp = 0, sm = 0;
        double fd = (scalar(xp, &sp) - scalar(xm, &sm)) / (2 * h);
        if (sp != sm) continue;
        ++checked;
        double a = res.grad_input.data[idx];
        double denom = std::max({std::fabs(fd), std::fabs(a), 1e-10});
        CHECK(std::fabs(fd - a) / denom <= 1e-5);
    }
    CHECK(checked >= 20);
}

TEST_CASE("embedding weight files round-trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "odi_weights_emb";
    fs::create_directories(dir);
    TinyCnn trunk = TinyCnn::random_init(4, 6, 3, 3);
    TinyCnnEmbedding emb = TinyCnnEmbedding::from_classifier(trunk, 8);
    std::string path = (dir / "emb.odiw").string();
    save_weights(path, emb);
    TinyCnnEmbedding loaded = load_embedding_weights(path);
    CHECK(loaded.we == emb.we);
    CHECK(loaded.trunk.w1 == emb.trunk.w1);
    CHECK_THROWS(load_classifier_weights(path)); // wrong kind
    fs::remove_all(dir);
}
