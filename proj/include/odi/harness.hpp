#ifndef ODI_HARNESS_HPP
#define ODI_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "odi/attack.hpp"
#include "odi/model.hpp"
#include "odi/scene.hpp"

namespace odi {

struct DatasetRow {
    std::string image_id;
    std::string path;
    int true_label = 0;
    int target_class = 0;
};

struct DatasetIndex {
    std::vector<DatasetRow> rows;
};

// Reads index.csv (image_id,true_label,target_class) and checks every
// referenced PNG exists. Label ranges are validated against the model later.
DatasetIndex ingest(const std::string& dataset_dir);

struct NamedAttack {
    std::string name; // [A-Za-z0-9_-]+
    AttackConfig config;
};

struct RunConfig {
    std::string dataset_dir;
    std::string source_model;
    std::vector<std::string> target_models; // evaluated by file stem
    std::vector<NamedAttack> attacks;
    SceneConfig scene;
    std::string output_dir;
    uint64_t seed = 1;
    int workers = 1;
    std::vector<int> checkpoints; // iterations for the success curves
    bool write_adv_png = true;
    int limit_images = 0; // 0 = all
    int dump_frames = 0;  // debug: save this many transformed frames per attack

    void validate() const;
};

RunConfig load_run_config(const std::string& path);

struct ResultRow {
    std::string attack;
    std::string target;
    double success_pct = 0.0;
    double mean_seconds = 0.0;
};

struct CurvePoint {
    std::string attack;
    std::string target;
    int iteration = 0;
    double success_pct = 0.0;
};

struct JobError {
    std::string attack;
    std::string image_id;
    std::string message;
};

struct RunResult {
    std::vector<ResultRow> table;
    std::vector<CurvePoint> curves;
    std::vector<JobError> errors;
    int images_total = 0;
};

// Attacks every image on the source model and scores every target model.
// Deterministic for a fixed (config, seed) regardless of worker count: jobs
// are seeded by hash(seed, image_id) and results are aggregated in index
// order. Timing is wall clock around run_attack only.
RunResult run_matrix(const RunConfig& cfg);

// results.csv: attack,target,success_rate_pct,mean_seconds_per_image.
// Success rates carry one decimal. `include_timing=false` drops the timing
// column (it is the only nondeterministic field).
void write_results_csv(const std::string& path, const std::vector<ResultRow>& table,
                       bool include_timing = true);
void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curves);

// Human-readable table, one attack per row, one column per target.
std::string format_result_table(const std::vector<ResultRow>& table);

std::vector<ResultRow> read_results_csv(const std::string& path);

// Success = top-1 prediction equals the stored target class.
double evaluate_success_rate(const DatasetIndex& index, const TinyCnn& model,
                             const std::string& adv_dir);

} // namespace odi

#endif
