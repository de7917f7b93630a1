#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gridfault/network.hpp"
#include "gridfault/transient.hpp"

namespace gridfault {

class CampaignInfeasible : public std::runtime_error {
public:
    explicit CampaignInfeasible(const std::string& what) : std::runtime_error(what) {}
};

class TooFewExamples : public std::runtime_error {
public:
    explicit TooFewExamples(const std::string& what) : std::runtime_error(what) {}
};

class TaskMismatch : public std::runtime_error {
public:
    explicit TaskMismatch(const std::string& what) : std::runtime_error(what) {}
};

enum class Task { Forecast, FaultType, Locate3Phi, LocateLL };

std::string to_string(Task task);
Task task_from_string(const std::string& s);

/// Label used for no-fault rows in a FaultType campaign; the binary task
/// never trains or evaluates on them.
constexpr int kUnlabeled = -1;

/// Per-channel affine normalization, always derived from the train split.
struct NormStats {
    double mean_vmag = 0.0;
    double std_vmag = 1.0;
    double mean_vang = 0.0;
    double std_vang = 1.0;
    std::string source = "train";
};

struct ExampleMeta {
    int id = 0;
    std::uint64_t seed = 0;
    FaultKind kind = FaultKind::None;
    int bus = 0;
    int branch = 0;
    double t_apply = 0.0;
    double t_clear = 0.0;
    Complex zf{0.0, 0.0};
    int label = kUnlabeled;
    Eigen::VectorXd deviation;  // Forecast target
};

struct DatasetManifest {
    Task task = Task::FaultType;
    std::uint64_t seed = 0;
    int runs_per_bus = 0;
    int example_count = 0;
    int bus_count = 0;
    std::string network_file;
    std::uint64_t network_hash = 0;
    std::uint64_t provenance_hash = 0;
    double fluct_lo = -0.2;
    double fluct_hi = 0.2;
    std::map<int, int> label_counts;
    double train_fraction = 0.0;
    std::uint64_t split_seed = 0;
    std::vector<int> train_idx;
    std::vector<int> test_idx;
    NormStats norm;
    bool has_split = false;
    bool has_norm = false;
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

struct CampaignConfig {
    Task task = Task::FaultType;
    int runs_per_bus = 10;
    std::uint64_t seed = 1;
    double fluct_lo = -0.2;
    double fluct_hi = 0.2;
    int jobs = 1;
    SimOptions sim;
};

/// Simulates every scenario of the campaign, writes examples/<id>.csv,
/// labels.csv and manifest.json under out_dir, and returns the manifest.
/// Diverged runs are redrawn with fresh derived seeds; more than 10% failures
/// aborts with CampaignInfeasible. Scenario runs are independent, so jobs > 1
/// parallelizes across them without changing any output byte.
DatasetManifest generate_campaign(const NetworkModel& net, const std::string& network_file,
                                  const CampaignConfig& config,
                                  const std::filesystem::path& out_dir);

/// Stratified train/test split, deterministic under seed. Classification
/// campaigns stratify per label; Forecast splits the whole pool.
void split_dataset(DatasetManifest& manifest, const std::vector<int>& labels,
                   double train_fraction, std::uint64_t seed);

struct LabeledExample {
    Task task;
    Eigen::MatrixXd v_mag;           // steps x buses
    Eigen::MatrixXd v_ang;           // steps x buses
    Eigen::VectorXd prefault_vmag;   // Forecast input (first sample)
    int label = kUnlabeled;          // class id or fault bus (0 = no fault)
    Eigen::VectorXd deviation;       // Forecast target
};

/// Task-specific features and label from one simulated series.
LabeledExample featurize(const PmuSeries& series, Task task);

/// In-memory dataset: manifest plus every example's series and label.
struct Dataset {
    DatasetManifest manifest;
    std::vector<ExampleMeta> meta;
    std::vector<Eigen::MatrixXd> v_mag;
    std::vector<Eigen::MatrixXd> v_ang;

    int bus_count() const { return manifest.bus_count; }
    int count() const { return manifest.example_count; }
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// Channel statistics over the train-split series.
NormStats compute_norm_stats(const Dataset& data, const std::vector<int>& train_idx);

}  // namespace gridfault
