#include "odi/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "odi/png_io.hpp"
#include "odi/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace odi {

DatasetIndex ingest(const std::string& dataset_dir) {
    std::string csv_path = dataset_dir + "/index.csv";
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("ingest: cannot open " + csv_path);

    DatasetIndex index;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("image_id", 0) == 0) continue; // header
        std::istringstream ss(line);
        DatasetRow row;
        std::string lbl, tgt;
        if (!std::getline(ss, row.image_id, ',') || !std::getline(ss, lbl, ',') ||
            !std::getline(ss, tgt))
            throw std::runtime_error("ingest: malformed row " + std::to_string(lineno) + " in " + csv_path);
        try {
            row.true_label = std::stoi(lbl);
            row.target_class = std::stoi(tgt);
        } catch (const std::exception&) {
            throw std::runtime_error("ingest: non-numeric label in row " + std::to_string(lineno) +
                                     " in " + csv_path);
        }
        if (row.true_label < 0 || row.target_class < 0)
            throw std::runtime_error("ingest: negative label in row " + std::to_string(lineno));
        if (row.target_class == row.true_label)
            throw std::runtime_error("ingest: target equals true label for " + row.image_id);
        row.path = dataset_dir + "/" + row.image_id + ".png";
        if (!fs::exists(row.path))
            throw std::runtime_error("ingest: missing image file for row " + row.image_id + " (" +
                                     row.path + ")");
        index.rows.push_back(std::move(row));
    }
    return index;
}

void RunConfig::validate() const {
    if (dataset_dir.empty()) throw std::runtime_error("run config: dataset_dir not set");
    if (source_model.empty()) throw std::runtime_error("run config: source_model not set");
    if (target_models.empty()) throw std::runtime_error("run config: at least one target model required");
    if (attacks.empty()) throw std::runtime_error("run config: at least one attack required");
    if (output_dir.empty()) throw std::runtime_error("run config: output_dir not set");
    if (workers < 1) throw std::runtime_error("run config: workers must be >= 1");
    std::vector<std::string> names;
    for (const NamedAttack& a : attacks) {
        if (a.name.empty()) throw std::runtime_error("run config: attack without name");
        for (char c : a.name)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
                throw std::runtime_error("run config: attack name must match [A-Za-z0-9_-]: " + a.name);
        if (std::find(names.begin(), names.end(), a.name) != names.end())
            throw std::runtime_error("run config: duplicate attack name " + a.name);
        names.push_back(a.name);
        a.config.validate();
    }
    std::vector<std::string> stems;
    for (const std::string& t : target_models) {
        std::string stem = fs::path(t).stem().string();
        if (std::find(stems.begin(), stems.end(), stem) != stems.end())
            throw std::runtime_error("run config: duplicate target model stem " + stem);
        stems.push_back(stem);
    }
}

namespace {

Range range_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw std::runtime_error("config: range must be [lo,hi]");
    return Range{j[0].get<double>(), j[1].get<double>()};
}

SceneConfig scene_from_json(const json& j) {
    SceneConfig s;
    if (j.contains("texture_color")) s.texture_color = range_from_json(j["texture_color"]);
    if (j.contains("angle")) s.angle = range_from_json(j["angle"]);
    if (j.contains("distance")) s.distance = range_from_json(j["distance"]);
    if (j.contains("ambient")) s.ambient = range_from_json(j["ambient"]);
    if (j.contains("diffuse")) s.diffuse = range_from_json(j["diffuse"]);
    if (j.contains("light_translation")) s.light_translation = range_from_json(j["light_translation"]);
    if (j.contains("default_light_pos")) {
        auto& p = j["default_light_pos"];
        s.default_light_pos = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    }
    if (j.contains("shininess")) s.shininess = j["shininess"].get<double>();
    if (j.contains("specular_strength")) s.specular_strength = j["specular_strength"].get<double>();
    if (j.contains("background_mode"))
        s.background_mode = background_mode_from_string(j["background_mode"].get<std::string>());
    if (j.contains("instance_count")) s.instance_count = j["instance_count"].get<int>();
    if (j.contains("render_resolution")) s.render_resolution = j["render_resolution"].get<int>();
    s.validate();
    return s;
}

AttackConfig attack_from_json(const json& j) {
    AttackConfig c;
    if (j.contains("eps")) c.eps = j["eps"].get<double>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("iters")) c.iters = j["iters"].get<int>();
    if (j.contains("mu")) c.mu = j["mu"].get<double>();
    if (j.contains("ti_kernel_size")) c.ti_kernel_size = j["ti_kernel_size"].get<int>();
    if (j.contains("loss")) c.loss = loss_kind_from_string(j["loss"].get<std::string>());
    if (j.contains("transform"))
        c.transform.kind = transform_kind_from_string(j["transform"].get<std::string>());
    if (j.contains("di_prob")) c.transform.di_prob = j["di_prob"].get<double>();
    if (j.contains("di_max_size")) c.transform.di_max_size = j["di_max_size"].get<int>();
    if (j.contains("rdi_max_size")) c.transform.rdi_max_size = j["rdi_max_size"].get<int>();
    if (j.contains("si_copies")) c.si_copies = j["si_copies"].get<int>();
    if (j.contains("vt_samples")) c.vt_samples = j["vt_samples"].get<int>();
    if (j.contains("vt_beta")) c.vt_beta = j["vt_beta"].get<double>();
    return c;
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open run config " + path);
    json j;
    in >> j;

    RunConfig cfg;
    cfg.dataset_dir = j.at("dataset").get<std::string>();
    cfg.source_model = j.at("source_model").get<std::string>();
    for (const auto& t : j.at("target_models")) cfg.target_models.push_back(t.get<std::string>());
    cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("checkpoints"))
        for (const auto& c : j["checkpoints"]) cfg.checkpoints.push_back(c.get<int>());
    if (j.contains("write_adv_png")) cfg.write_adv_png = j["write_adv_png"].get<bool>();
    if (j.contains("limit_images")) cfg.limit_images = j["limit_images"].get<int>();
    if (j.contains("scene")) cfg.scene = scene_from_json(j["scene"]);
    for (const auto& a : j.at("attacks")) {
        NamedAttack na;
        na.name = a.at("name").get<std::string>();
        na.config = attack_from_json(a);
        cfg.attacks.push_back(std::move(na));
    }
    cfg.validate();
    return cfg;
}

namespace {

struct JobOutcome {
    bool ok = false;
    std::string error;
    double seconds = 0.0;
    std::vector<uint8_t> final_hit;                 // per target
    std::vector<std::vector<uint8_t>> checkpoint_hit; // [checkpoint][target]
};

int argmax_class(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

RunResult run_matrix(const RunConfig& cfg) {
    cfg.validate();
    DatasetIndex index = ingest(cfg.dataset_dir);
    if (cfg.limit_images > 0 && static_cast<int>(index.rows.size()) > cfg.limit_images)
        index.rows.resize(cfg.limit_images);

    TinyCnn source = load_classifier_weights(cfg.source_model);
    std::vector<TinyCnn> targets;
    std::vector<std::string> target_names;
    for (const std::string& path : cfg.target_models) {
        targets.push_back(load_classifier_weights(path));
        target_names.push_back(fs::path(path).stem().string());
    }
    for (const DatasetRow& row : index.rows)
        if (row.target_class >= source.num_classes || row.true_label >= source.num_classes)
            throw std::runtime_error("run_matrix: label out of range for source model: " + row.image_id);

    ObjectPool pool = builtin_objects();

    fs::create_directories(cfg.output_dir);
    RunResult result;
    result.images_total = static_cast<int>(index.rows.size());

    const int n_images = static_cast<int>(index.rows.size());
    const int n_targets = static_cast<int>(targets.size());
    std::vector<int> all_checkpoints = cfg.checkpoints;
    std::sort(all_checkpoints.begin(), all_checkpoints.end());
    all_checkpoints.erase(std::unique(all_checkpoints.begin(), all_checkpoints.end()),
                          all_checkpoints.end());

    for (const NamedAttack& attack : cfg.attacks) {
        std::string adv_dir = cfg.output_dir + "/adv/" + attack.name;
        if (cfg.write_adv_png) fs::create_directories(adv_dir);

        std::vector<int> checkpoints;
        for (int c : all_checkpoints)
            if (c >= 1 && c <= attack.config.iters) checkpoints.push_back(c);

        std::vector<JobOutcome> outcomes(n_images);
        auto job = [&](int i) {
            const DatasetRow& row = index.rows[i];
            JobOutcome& out = outcomes[i];
            try {
                Image x = read_png(row.path);
                AttackConfig ac = attack.config;
                ac.transform.pool = &pool;
                ac.transform.scene = &cfg.scene;
                ac.seed = derive_seed(cfg.seed, row.image_id);

                AttackTrace trace;
                auto t0 = std::chrono::steady_clock::now();
                Image adv = run_attack(x, row.target_class, source, ac, checkpoints, &trace);
                auto t1 = std::chrono::steady_clock::now();
                out.seconds = std::chrono::duration<double>(t1 - t0).count();

                out.final_hit.resize(n_targets);
                for (int m = 0; m < n_targets; ++m)
                    out.final_hit[m] = argmax_class(targets[m].forward(adv)) == row.target_class;
                out.checkpoint_hit.assign(trace.snapshots.size(), std::vector<uint8_t>(n_targets, 0));
                for (size_t s = 0; s < trace.snapshots.size(); ++s)
                    for (int m = 0; m < n_targets; ++m)
                        out.checkpoint_hit[s][m] =
                            argmax_class(targets[m].forward(trace.snapshots[s].second)) == row.target_class;

                if (cfg.write_adv_png) write_png(adv_dir + "/" + row.image_id + ".png", adv);
                if (cfg.dump_frames > 0 && i == 0) {
                    fs::create_directories(cfg.output_dir + "/frames/" + attack.name);
                    Rng frng(derive_seed(cfg.seed ^ 0xf7a3e5, row.image_id));
                    for (int f = 0; f < cfg.dump_frames; ++f) {
                        TransformResult tr = apply_transform(ac.transform, x, frng);
                        write_png(cfg.output_dir + "/frames/" + attack.name + "/frame_" +
                                      std::to_string(f) + ".png",
                                  tr.out);
                    }
                }
                out.ok = true;
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
        };

        int n_workers = std::min(cfg.workers, std::max(1, n_images));
        if (n_workers <= 1) {
            for (int i = 0; i < n_images; ++i) job(i);
        } else {
            // static partition by index; results land in preallocated slots
            std::vector<std::thread> threads;
            threads.reserve(n_workers);
            for (int w = 0; w < n_workers; ++w) {
                threads.emplace_back([&, w]() {
                    for (int i = w; i < n_images; i += n_workers) job(i);
                });
            }
            for (std::thread& t : threads) t.join();
        }

        int n_ok = 0;
        double total_seconds = 0.0;
        std::vector<int> final_hits(n_targets, 0);
        std::vector<std::vector<int>> curve_hits(checkpoints.size(), std::vector<int>(n_targets, 0));
        for (int i = 0; i < n_images; ++i) {
            const JobOutcome& out = outcomes[i];
            if (!out.ok) {
                result.errors.push_back({attack.name, index.rows[i].image_id, out.error});
                continue;
            }
            ++n_ok;
            total_seconds += out.seconds;
            for (int m = 0; m < n_targets; ++m) final_hits[m] += out.final_hit[m];
            for (size_t s = 0; s < out.checkpoint_hit.size() && s < checkpoints.size(); ++s)
                for (int m = 0; m < n_targets; ++m) curve_hits[s][m] += out.checkpoint_hit[s][m];
        }

        double denom = n_ok > 0 ? static_cast<double>(n_ok) : 1.0;
        for (int m = 0; m < n_targets; ++m) {
            ResultRow row;
            row.attack = attack.name;
            row.target = target_names[m];
            row.success_pct = 100.0 * final_hits[m] / denom;
            row.mean_seconds = total_seconds / denom;
            result.table.push_back(row);
            for (size_t s = 0; s < checkpoints.size(); ++s)
                result.curves.push_back(
                    {attack.name, target_names[m], checkpoints[s], 100.0 * curve_hits[s][m] / denom});
        }
    }

    write_results_csv(cfg.output_dir + "/results.csv", result.table);
    write_curves_csv(cfg.output_dir + "/curves.csv", result.curves);
    if (!result.errors.empty()) {
        std::ofstream err(cfg.output_dir + "/errors.txt");
        for (const JobError& e : result.errors)
            err << e.attack << "," << e.image_id << "," << e.message << "\n";
    }
    return result;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& table,
                       bool include_timing) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << (include_timing ? "attack,target,success_rate_pct,mean_seconds_per_image\n"
                           : "attack,target,success_rate_pct\n");
    char buf[64];
    for (const ResultRow& row : table) {
        std::snprintf(buf, sizeof(buf), "%.1f", row.success_pct);
        out << row.attack << "," << row.target << "," << buf;
        if (include_timing) {
            std::snprintf(buf, sizeof(buf), "%.4f", row.mean_seconds);
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curves) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "attack,target,iteration,success_rate_pct\n";
    char buf[32];
    for (const CurvePoint& p : curves) {
        std::snprintf(buf, sizeof(buf), "%.1f", p.success_pct);
        out << p.attack << "," << p.target << "," << p.iteration << "," << buf << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::string format_result_table(const std::vector<ResultRow>& table) {
    std::vector<std::string> attacks, targets;
    for (const ResultRow& row : table) {
        if (std::find(attacks.begin(), attacks.end(), row.attack) == attacks.end())
            attacks.push_back(row.attack);
        if (std::find(targets.begin(), targets.end(), row.target) == targets.end())
            targets.push_back(row.target);
    }
    auto find_row = [&](const std::string& a, const std::string& t) -> const ResultRow* {
        for (const ResultRow& row : table)
            if (row.attack == a && row.target == t) return &row;
        return nullptr;
    };

    size_t name_w = 8;
    for (const std::string& a : attacks) name_w = std::max(name_w, a.size());
    std::vector<size_t> col_w(targets.size());
    for (size_t c = 0; c < targets.size(); ++c) col_w[c] = std::max<size_t>(targets[c].size(), 6);

    std::ostringstream out;
    out << std::string(name_w, ' ');
    for (size_t c = 0; c < targets.size(); ++c)
        out << "  " << std::string(col_w[c] - targets[c].size(), ' ') << targets[c];
    out << "  sec/img\n";

    char buf[64];
    for (const std::string& a : attacks) {
        out << a << std::string(name_w - a.size(), ' ');
        double secs = 0.0;
        for (size_t c = 0; c < targets.size(); ++c) {
            const ResultRow* row = find_row(a, targets[c]);
            std::string cell = "-";
            if (row) {
                std::snprintf(buf, sizeof(buf), "%.1f", row->success_pct);
                cell = buf;
                secs = row->mean_seconds;
            }
            out << "  " << std::string(col_w[c] - std::min(col_w[c], cell.size()), ' ') << cell;
        }
        std::snprintf(buf, sizeof(buf), "%7.3f", secs);
        out << "  " << buf << "\n";
    }
    return out.str();
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<ResultRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ss(line);
        ResultRow row;
        std::string pct, secs;
        std::getline(ss, row.attack, ',');
        std::getline(ss, row.target, ',');
        std::getline(ss, pct, ',');
        row.success_pct = std::stod(pct);
        if (std::getline(ss, secs)) row.mean_seconds = std::stod(secs);
        rows.push_back(std::move(row));
    }
    return rows;
}

double evaluate_success_rate(const DatasetIndex& index, const TinyCnn& model,
                             const std::string& adv_dir) {
    if (index.rows.empty()) return 0.0;
    int hits = 0;
    for (const DatasetRow& row : index.rows) {
        Image adv = read_png(adv_dir + "/" + row.image_id + ".png");
        std::vector<double> logits = model.forward(adv);
        if (argmax_class(logits) == row.target_class) ++hits;
    }
    return 100.0 * hits / static_cast<double>(index.rows.size());
}

} // namespace odi
