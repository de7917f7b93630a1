#include "gridfault/dataset.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

#include "gridfault/io_util.hpp"
#include "gridfault/rng.hpp"
#include "json.hpp"

namespace gridfault {

std::string to_string(Task task) {
    switch (task) {
        case Task::Forecast: return "forecast";
        case Task::FaultType: return "fault-type";
        case Task::Locate3Phi: return "locate-3ph";
        case Task::LocateLL: return "locate-ll";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "forecast") return Task::Forecast;
    if (s == "fault-type") return Task::FaultType;
    if (s == "locate-3ph") return Task::Locate3Phi;
    if (s == "locate-ll") return Task::LocateLL;
    throw TaskMismatch("unknown task '" + s + "'");
}

namespace {

using nlohmann::json;

std::string example_filename(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.csv", id);
    return buf;
}

struct ScenarioSlot {
    FaultKind kind;
    int bus;  // 0 for no-fault and branch trips
};

std::vector<ScenarioSlot> campaign_slots(Task task, int n_buses, int runs_per_bus) {
    std::vector<FaultKind> kinds;
    switch (task) {
        case Task::FaultType: kinds = {FaultKind::LL, FaultKind::LG, FaultKind::None}; break;
        case Task::Locate3Phi: kinds = {FaultKind::ThreePhaseBus, FaultKind::None}; break;
        case Task::LocateLL: kinds = {FaultKind::LL, FaultKind::None}; break;
        case Task::Forecast: kinds = {FaultKind::BranchTrip}; break;
    }
    std::vector<ScenarioSlot> slots;
    for (FaultKind kind : kinds) {
        const bool located = kind == FaultKind::LL || kind == FaultKind::LG ||
                             kind == FaultKind::ThreePhaseBus;
        for (int bus = 1; bus <= n_buses; ++bus) {
            for (int r = 0; r < runs_per_bus; ++r) {
                slots.push_back({kind, located ? bus : 0});
            }
        }
    }
    return slots;
}

int label_for(Task task, FaultKind kind, int bus) {
    switch (task) {
        case Task::FaultType:
            if (kind == FaultKind::LL) return 0;
            if (kind == FaultKind::LG) return 1;
            return kUnlabeled;
        case Task::Locate3Phi:
            if (kind == FaultKind::ThreePhaseBus) return bus;
            if (kind == FaultKind::None) return 0;
            return kUnlabeled;
        case Task::LocateLL:
            if (kind == FaultKind::LL) return bus;
            if (kind == FaultKind::None) return 0;
            return kUnlabeled;
        case Task::Forecast:
            return kUnlabeled;
    }
    return kUnlabeled;
}

double snap_time(double t, double dt) { return std::round(t / dt) * dt; }

struct RunResult {
    ExampleMeta meta;
    PmuSeries series;
};

/// One campaign draw: base operating point, event plan, fault script, run.
RunResult run_scenario(const NetworkModel& net, const ScenarioSlot& slot,
                       std::uint64_t seed, const CampaignConfig& cfg) {
    Rng rng(seed);
    const double dt = cfg.sim.dt;

    const FluctuationPlan base =
        draw_fluctuation(rng.next_u64(), cfg.fluct_lo, cfg.fluct_hi, net, -1.0);
    const NetworkModel net_run = apply_fluctuation_to_network(net, base);

    const double t_step = snap_time(rng.uniform(0.2, 3.0), dt);
    const FluctuationPlan event =
        draw_fluctuation(rng.next_u64(), cfg.fluct_lo, cfg.fluct_hi, net, t_step);

    FaultScenario sc;
    sc.kind = slot.kind;
    if (slot.kind != FaultKind::None) {
        sc.t_apply = snap_time(1.0 + rng.uniform(-0.4, 0.4), dt);
        const double duration = std::max(0.05, snap_time(0.2 + rng.uniform(-0.1, 0.1), dt));
        sc.t_clear = sc.t_apply + duration;
        if (slot.kind == FaultKind::BranchTrip) {
            sc.branch = 1 + static_cast<int>(rng.below(net.branches.size()));
        } else {
            sc.bus = slot.bus;
            if (slot.kind != FaultKind::ThreePhaseBus) {
                sc.zf = Complex(0.0, 0.01 * rng.uniform(0.5, 2.0));
            }
        }
    }

    RunResult out;
    out.series = simulate(net_run, sc, event, seed, cfg.sim);
    out.meta.seed = seed;
    out.meta.kind = sc.kind;
    out.meta.bus = sc.bus;
    out.meta.branch = sc.branch;
    out.meta.t_apply = sc.t_apply;
    out.meta.t_clear = sc.t_clear;
    out.meta.zf = sc.zf;
    return out;
}

std::string labels_header(Task task, int n_buses) {
    if (task == Task::Forecast) {
        std::string h = "id,task,kind,bus,branch,seed,t_apply,t_clear,zf_r,zf_x";
        for (int b = 1; b <= n_buses; ++b) h += ",dev_" + std::to_string(b);
        return h;
    }
    return "id,task,label,kind,bus,branch,seed,t_apply,t_clear,zf_r,zf_x";
}

std::string labels_row(Task task, const ExampleMeta& m) {
    std::string row = std::to_string(m.id) + "," + to_string(task);
    if (task != Task::Forecast) row += "," + std::to_string(m.label);
    row += "," + to_string(m.kind);
    row += "," + std::to_string(m.bus);
    row += "," + std::to_string(m.branch);
    row += "," + std::to_string(m.seed);
    row += "," + format_double(m.t_apply);
    row += "," + format_double(m.t_clear);
    row += "," + format_double(m.zf.real());
    row += "," + format_double(m.zf.imag());
    if (task == Task::Forecast) {
        for (Eigen::Index b = 0; b < m.deviation.size(); ++b) {
            row += "," + format_double(m.deviation(b));
        }
    }
    return row;
}

}  // namespace

DatasetManifest generate_campaign(const NetworkModel& net, const std::string& network_file,
                                  const CampaignConfig& config,
                                  const std::filesystem::path& out_dir) {
    if (config.runs_per_bus < 1) {
        throw CampaignInfeasible("runs_per_bus must be >= 1");
    }
    net.validate();
    const int n = net.bus_count();
    const auto slots = campaign_slots(config.task, n, config.runs_per_bus);
    const int count = static_cast<int>(slots.size());

    std::filesystem::create_directories(out_dir / "examples");

    std::vector<ExampleMeta> metas(count);
    std::atomic<long> attempts{0};
    std::atomic<long> failures{0};
    std::atomic<bool> aborted{false};
    std::string abort_reason;
    const int jobs = config.jobs > 0 ? config.jobs : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (int i = 0; i < count; ++i) {
        if (aborted.load()) continue;
        const std::uint64_t example_seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
        bool done = false;
        for (int attempt = 0; attempt < 20 && !done; ++attempt) {
            attempts.fetch_add(1);
            const std::uint64_t seed = attempt == 0
                                           ? example_seed
                                           : derive_seed(example_seed, 0xF00DULL + attempt);
            try {
                RunResult r = run_scenario(net, slots[i], seed, config);
                r.meta.id = i;
                r.meta.label = label_for(config.task, r.meta.kind, r.meta.bus);
                if (config.task == Task::Forecast) {
                    r.meta.deviation = max_voltage_deviation(r.series);
                }
                write_pmu_csv(r.series, out_dir / "examples" / example_filename(i));
                metas[i] = std::move(r.meta);
                done = true;
            } catch (const PreFaultDivergence&) {
                failures.fetch_add(1);
            } catch (const NumericalBlowup&) {
                failures.fetch_add(1);
            } catch (const std::exception& e) {
#pragma omp critical
                {
                    if (!aborted.exchange(true)) abort_reason = e.what();
                }
                break;
            }
        }
        if (!done && !aborted.load()) {
#pragma omp critical
            {
                if (!aborted.exchange(true)) {
                    abort_reason = "scenario " + std::to_string(i) +
                                   " failed 20 consecutive redraws";
                }
            }
        }
    }

    if (aborted.load()) throw CampaignInfeasible(abort_reason);
    if (failures.load() * 10 > attempts.load()) {
        throw CampaignInfeasible(std::to_string(failures.load()) + " of " +
                                 std::to_string(attempts.load()) + " draws diverged (>10%)");
    }

    std::string labels = labels_header(config.task, n) + "\n";
    for (const auto& m : metas) labels += labels_row(config.task, m) + "\n";
    write_text_file(out_dir / "labels.csv", labels);

    DatasetManifest manifest;
    manifest.task = config.task;
    manifest.seed = config.seed;
    manifest.runs_per_bus = config.runs_per_bus;
    manifest.example_count = count;
    manifest.bus_count = n;
    manifest.network_file = network_file;
    manifest.network_hash = network_file.empty()
                                ? hash_bytes(nullptr, 0)
                                : hash_file(network_file);
    manifest.fluct_lo = config.fluct_lo;
    manifest.fluct_hi = config.fluct_hi;
    const std::string prov = std::to_string(manifest.network_hash) + "|" +
                             std::to_string(config.seed) + "|" + to_string(config.task) +
                             "|" + std::to_string(config.runs_per_bus) + "|" +
                             format_double(config.fluct_lo) + "|" +
                             format_double(config.fluct_hi);
    manifest.provenance_hash = hash_bytes(prov.data(), prov.size());
    for (const auto& m : metas) manifest.label_counts[m.label]++;
    save_manifest(manifest, out_dir);
    return manifest;
}

void split_dataset(DatasetManifest& manifest, const std::vector<int>& labels,
                   double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train_fraction must lie in (0, 1)");
    }
    if (static_cast<int>(labels.size()) != manifest.example_count) {
        throw TooFewExamples("label list does not match the manifest example count");
    }

    std::map<int, std::vector<int>> groups;
    if (manifest.task == Task::Forecast) {
        for (int i = 0; i < manifest.example_count; ++i) groups[0].push_back(i);
    } else {
        for (int i = 0; i < manifest.example_count; ++i) groups[labels[i]].push_back(i);
    }

    manifest.train_idx.clear();
    manifest.test_idx.clear();
    for (auto& [label, members] : groups) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label + 4096)));
        rng.shuffle(members);
        const auto train_n =
            static_cast<std::size_t>(std::llround(train_fraction * members.size()));
        if (train_n >= members.size()) {
            throw TooFewExamples("label " + std::to_string(label) +
                                 " would have an empty test set");
        }
        for (std::size_t k = 0; k < members.size(); ++k) {
            (k < train_n ? manifest.train_idx : manifest.test_idx).push_back(members[k]);
        }
    }
    std::sort(manifest.train_idx.begin(), manifest.train_idx.end());
    std::sort(manifest.test_idx.begin(), manifest.test_idx.end());
    manifest.train_fraction = train_fraction;
    manifest.split_seed = seed;
    manifest.has_split = true;
    manifest.label_counts.clear();
    for (int l : labels) manifest.label_counts[l]++;
}

LabeledExample featurize(const PmuSeries& series, Task task) {
    LabeledExample ex;
    ex.task = task;
    ex.v_mag = series.v_mag;
    ex.v_ang = series.v_ang;
    const FaultKind kind = series.scenario.kind;
    switch (task) {
        case Task::Forecast:
            ex.prefault_vmag = series.v_mag.row(0).transpose();
            ex.deviation = max_voltage_deviation(series);
            break;
        case Task::FaultType:
            if (kind != FaultKind::LL && kind != FaultKind::LG) {
                throw TaskMismatch("fault-type task expects an LL or LG series, got " +
                                   to_string(kind));
            }
            ex.label = label_for(task, kind, series.scenario.bus);
            break;
        case Task::Locate3Phi:
            if (kind != FaultKind::ThreePhaseBus && kind != FaultKind::None) {
                throw TaskMismatch("locate-3ph task expects a 3ph or no-fault series, got " +
                                   to_string(kind));
            }
            ex.label = label_for(task, kind, series.scenario.bus);
            break;
        case Task::LocateLL:
            if (kind != FaultKind::LL && kind != FaultKind::None) {
                throw TaskMismatch("locate-ll task expects an LL or no-fault series, got " +
                                   to_string(kind));
            }
            ex.label = label_for(task, kind, series.scenario.bus);
            break;
    }
    return ex;
}

std::string manifest_to_json(const DatasetManifest& m) {
    json doc;
    doc["format"] = "gridfault-dataset-v1";
    doc["task"] = to_string(m.task);
    doc["seed"] = m.seed;
    doc["runs_per_bus"] = m.runs_per_bus;
    doc["example_count"] = m.example_count;
    doc["bus_count"] = m.bus_count;
    doc["network_file"] = m.network_file;
    doc["network_hash"] = m.network_hash;
    doc["provenance_hash"] = m.provenance_hash;
    doc["fluct_lo"] = m.fluct_lo;
    doc["fluct_hi"] = m.fluct_hi;
    json counts = json::object();
    for (const auto& [label, c] : m.label_counts) counts[std::to_string(label)] = c;
    doc["label_counts"] = counts;
    if (m.has_split) {
        doc["split"] = {{"train_fraction", m.train_fraction},
                        {"seed", m.split_seed},
                        {"train", m.train_idx},
                        {"test", m.test_idx}};
    }
    if (m.has_norm) {
        doc["norm"] = {{"mean_vmag", m.norm.mean_vmag},
                       {"std_vmag", m.norm.std_vmag},
                       {"mean_vang", m.norm.mean_vang},
                       {"std_vang", m.norm.std_vang},
                       {"source", m.norm.source}};
    }
    return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    json doc = json::parse(text);
    DatasetManifest m;
    m.task = task_from_string(doc.at("task").get<std::string>());
    m.seed = doc.value("seed", 0ULL);
    m.runs_per_bus = doc.value("runs_per_bus", 0);
    m.example_count = doc.value("example_count", 0);
    m.bus_count = doc.value("bus_count", 0);
    m.network_file = doc.value("network_file", "");
    m.network_hash = doc.value("network_hash", 0ULL);
    m.provenance_hash = doc.value("provenance_hash", 0ULL);
    m.fluct_lo = doc.value("fluct_lo", -0.2);
    m.fluct_hi = doc.value("fluct_hi", 0.2);
    if (doc.contains("label_counts")) {
        for (const auto& item : doc["label_counts"].items()) {
            m.label_counts[std::stoi(item.key())] = item.value().get<int>();
        }
    }
    if (doc.contains("split")) {
        m.has_split = true;
        m.train_fraction = doc["split"].value("train_fraction", 0.0);
        m.split_seed = doc["split"].value("seed", 0ULL);
        m.train_idx = doc["split"].value("train", std::vector<int>{});
        m.test_idx = doc["split"].value("test", std::vector<int>{});
    }
    if (doc.contains("norm")) {
        m.has_norm = true;
        m.norm.mean_vmag = doc["norm"].value("mean_vmag", 0.0);
        m.norm.std_vmag = doc["norm"].value("std_vmag", 1.0);
        m.norm.mean_vang = doc["norm"].value("mean_vang", 0.0);
        m.norm.std_vang = doc["norm"].value("std_vang", 1.0);
        m.norm.source = doc["norm"].value("source", "train");
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir) {
    write_text_file(dir / "manifest.json", manifest_to_json(manifest));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset data;
    data.manifest = manifest_from_json(read_text_file(dir / "manifest.json"));

    const std::string labels_path = (dir / "labels.csv").string();
    std::ifstream in(labels_path);
    if (!in) throw ParseError(labels_path, "cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(labels_path, "empty labels file", 1);
    long line_no = 1;
    const bool forecast = data.manifest.task == Task::Forecast;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::size_t fixed = forecast ? 10 : 11;
        if (f.size() < fixed) throw ParseError(labels_path, "too few columns", line_no);
        ExampleMeta m;
        std::size_t k = 0;
        m.id = static_cast<int>(parse_long(f[k++], labels_path, line_no));
        ++k;  // task column, redundant with the manifest
        if (!forecast) m.label = static_cast<int>(parse_long(f[k++], labels_path, line_no));
        m.kind = fault_kind_from_string(f[k++]);
        m.bus = static_cast<int>(parse_long(f[k++], labels_path, line_no));
        m.branch = static_cast<int>(parse_long(f[k++], labels_path, line_no));
        m.seed = static_cast<std::uint64_t>(parse_long(f[k++], labels_path, line_no));
        m.t_apply = parse_double(f[k++], labels_path, line_no);
        m.t_clear = parse_double(f[k++], labels_path, line_no);
        const double zr = parse_double(f[k++], labels_path, line_no);
        const double zx = parse_double(f[k++], labels_path, line_no);
        m.zf = Complex(zr, zx);
        if (forecast) {
            m.deviation.resize(static_cast<Eigen::Index>(f.size() - k));
            for (Eigen::Index b = 0; k < f.size(); ++k, ++b) {
                m.deviation(b) = parse_double(f[k], labels_path, line_no);
            }
        }
        data.meta.push_back(std::move(m));
    }
    if (static_cast<int>(data.meta.size()) != data.manifest.example_count) {
        throw ParseError(labels_path, "labels.csv row count does not match the manifest");
    }

    data.v_mag.resize(data.meta.size());
    data.v_ang.resize(data.meta.size());
    for (std::size_t i = 0; i < data.meta.size(); ++i) {
        const PmuSeries s = read_pmu_csv(dir / "examples" / example_filename(data.meta[i].id));
        data.v_mag[i] = s.v_mag;
        data.v_ang[i] = s.v_ang;
    }
    return data;
}

NormStats compute_norm_stats(const Dataset& data, const std::vector<int>& train_idx) {
    double sum_m = 0.0, sq_m = 0.0, sum_a = 0.0, sq_a = 0.0;
    long count = 0;
    for (int i : train_idx) {
        sum_m += data.v_mag[static_cast<std::size_t>(i)].sum();
        sq_m += data.v_mag[static_cast<std::size_t>(i)].array().square().sum();
        sum_a += data.v_ang[static_cast<std::size_t>(i)].sum();
        sq_a += data.v_ang[static_cast<std::size_t>(i)].array().square().sum();
        count += data.v_mag[static_cast<std::size_t>(i)].size();
    }
    if (count == 0) throw TooFewExamples("cannot compute normalization from an empty split");
    NormStats ns;
    const double n = static_cast<double>(count);
    ns.mean_vmag = sum_m / n;
    ns.std_vmag = std::sqrt(std::max(sq_m / n - ns.mean_vmag * ns.mean_vmag, 1e-12));
    ns.mean_vang = sum_a / n;
    ns.std_vang = std::sqrt(std::max(sq_a / n - ns.mean_vang * ns.mean_vang, 1e-12));
    ns.source = "train";
    return ns;
}

}  // namespace gridfault
