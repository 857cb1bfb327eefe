#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "odi/harness.hpp"
#include "odi/model.hpp"
#include "odi/png_io.hpp"
#include "odi/rng.hpp"

using namespace odi;

namespace {

int cmd_gen_dataset(const std::string& out_dir, int classes, int per_class, int size,
                    uint64_t seed) {
    Rng rng(seed);
    Dataset ds = gen_synthetic_dataset(classes, per_class, size, rng);
    save_dataset(out_dir, ds);
    std::cout << "wrote " << ds.items.size() << " images (" << classes << " classes) to " << out_dir
              << "\n";
    return 0;
}

int cmd_train_model(const std::string& dataset_dir, const std::string& out_path, int c1, int c2,
                    int epochs, double lr, uint64_t seed) {
    DatasetIndex index = ingest(dataset_dir);
    Dataset ds;
    for (const DatasetRow& row : index.rows) {
        DataItem item;
        item.id = row.image_id;
        item.image = read_png(row.path);
        item.label = row.true_label;
        item.target = row.target_class;
        ds.items.push_back(std::move(item));
        ds.num_classes = std::max(ds.num_classes, row.true_label + 1);
    }
    for (const DatasetRow& row : index.rows)
        ds.num_classes = std::max(ds.num_classes, row.target_class + 1);

    TinyCnn model = TinyCnn::random_init(c1, c2, ds.num_classes, seed);
    Rng rng(splitmix64(seed ^ 0x7261696e)); // independent stream for shuffling
    TrainReport report = train_sgd(model, ds, epochs, lr, rng);
    save_weights(out_path, model);
    std::printf("trained %dx%d model on %zu images, final train accuracy %.1f%%\n", c1, c2,
                ds.items.size(), 100.0 * report.final_accuracy);
    std::cout << "saved weights to " << out_path << "\n";
    return 0;
}

int cmd_attack(const std::string& config_path, int workers_override, long seed_override,
               int dump_frames, bool no_timing) {
    RunConfig cfg = load_run_config(config_path);
    if (workers_override > 0) cfg.workers = workers_override;
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    cfg.dump_frames = dump_frames;
    RunResult result = run_matrix(cfg);
    if (no_timing) write_results_csv(cfg.output_dir + "/results.csv", result.table, false);

    std::cout << format_result_table(result.table);
    std::cout << "results written to " << cfg.output_dir << "\n";
    if (!result.errors.empty()) {
        std::cerr << result.errors.size() << " job(s) failed:\n";
        for (const JobError& e : result.errors)
            std::cerr << "  [" << e.attack << "] " << e.image_id << ": " << e.message << "\n";
        return 1;
    }
    return 0;
}

int cmd_evaluate(const std::string& dataset_dir, const std::string& model_path,
                 const std::string& adv_dir) {
    DatasetIndex index = ingest(dataset_dir);
    TinyCnn model = load_classifier_weights(model_path);
    double rate = evaluate_success_rate(index, model, adv_dir);
    std::printf("targeted success rate: %.1f%% (%zu images)\n", rate, index.rows.size());
    return 0;
}

int cmd_report(const std::string& results_path) {
    std::vector<ResultRow> table = read_results_csv(results_path);
    std::cout << format_result_table(table);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ODI transfer-attack toolkit"};
    app.require_subcommand(1);

    // gen-dataset
    std::string gd_out = "dataset";
    int gd_classes = 8, gd_per_class = 50, gd_size = 64;
    uint64_t gd_seed = 1;
    auto* gd = app.add_subcommand("gen-dataset", "Generate a synthetic glyph dataset");
    gd->add_option("--out", gd_out, "Output directory")->required();
    gd->add_option("--classes", gd_classes, "Number of classes (2-8)");
    gd->add_option("--per-class", gd_per_class, "Images per class");
    gd->add_option("--size", gd_size, "Image size in pixels (>= 64)");
    gd->add_option("--seed", gd_seed, "RNG seed");

    // train-model
    std::string tm_dataset, tm_out = "model.odiw";
    int tm_c1 = 16, tm_c2 = 32, tm_epochs = 20;
    double tm_lr = 0.05;
    uint64_t tm_seed = 1;
    auto* tm = app.add_subcommand("train-model", "Train a TinyCNN classifier");
    tm->add_option("--dataset", tm_dataset, "Dataset directory")->required();
    tm->add_option("--out", tm_out, "Output weight file")->required();
    tm->add_option("--width1", tm_c1, "Channels of conv1");
    tm->add_option("--width2", tm_c2, "Channels of conv2");
    tm->add_option("--epochs", tm_epochs, "Training epochs");
    tm->add_option("--lr", tm_lr, "Learning rate");
    tm->add_option("--seed", tm_seed, "Init/shuffle seed");

    // attack
    std::string at_config;
    int at_workers = 0, at_dump_frames = 0;
    long at_seed = -1;
    bool at_no_timing = false;
    auto* at = app.add_subcommand("attack", "Run the attack matrix from a JSON config");
    at->add_option("--config", at_config, "Run config JSON")->required();
    at->add_option("--workers", at_workers, "Override worker count");
    at->add_option("--seed", at_seed, "Override global seed");
    at->add_option("--dump-frames", at_dump_frames, "Save N transformed frames of the first image");
    at->add_flag("--no-timing", at_no_timing, "Omit the timing column from results.csv");

    // evaluate
    std::string ev_dataset, ev_model, ev_adv;
    auto* ev = app.add_subcommand("evaluate", "Score adversarial PNGs against a model");
    ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    ev->add_option("--model", ev_model, "Model weight file")->required();
    ev->add_option("--adv-dir", ev_adv, "Directory of adversarial PNGs")->required();

    // report
    std::string rp_results;
    auto* rp = app.add_subcommand("report", "Pretty-print a results.csv");
    rp->add_option("--results", rp_results, "results.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gd->parsed()) return cmd_gen_dataset(gd_out, gd_classes, gd_per_class, gd_size, gd_seed);
        if (tm->parsed())
            return cmd_train_model(tm_dataset, tm_out, tm_c1, tm_c2, tm_epochs, tm_lr, tm_seed);
        if (at->parsed()) return cmd_attack(at_config, at_workers, at_seed, at_dump_frames, at_no_timing);
        if (ev->parsed()) return cmd_evaluate(ev_dataset, ev_model, ev_adv);
        if (rp->parsed()) return cmd_report(rp_results);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
