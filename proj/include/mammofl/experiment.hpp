#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mammofl/cascade.hpp"
#include "mammofl/phantom.hpp"
#include "mammofl/stats.hpp"
#include "mammofl/unet.hpp"

namespace mammofl::harness {

/// Training regimes: each single institution, the pooled baseline, and the
/// federated run.
enum class Regime { CentralizedA, CentralizedB, CentralizedPooled, Federated };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

/// Everything a run needs, serializable as flat key=value text. Replaying a
/// written config reproduces results bit-exactly within one build.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out = "runs/default";
    std::string regime = "federated";

    nn::UNetConfig net;
    cascade::CascadeHyper hyper;
    int local_epochs = 1;

    std::string host = "127.0.0.1";
    int port = 0;  // 0 = ephemeral (loopback runs)
    double round_timeout_s = 3600.0;

    std::vector<phantom::InstitutionProfile> institutions;  // training cohorts
    std::vector<int> test_subjects;                         // per institution

    /// Two heterogeneous institutions, 200 train / 50 test images each:
    /// inst_a is CC-like with a bright skin rim and low dense contrast,
    /// inst_b is MLO-like (pectoral wedge) with high dense contrast.
    static ExperimentConfig defaults();

    void validate() const;
    std::string to_text() const;
    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    std::string data_dir() const { return out + "/data"; }
    std::string train_dir(const std::string& institution) const {
        return data_dir() + "/" + institution + "_train";
    }
    std::string test_dir(const std::string& institution) const {
        return data_dir() + "/" + institution + "_test";
    }
    std::string model_dir(Regime r) const { return out + "/models/" + regime_name(r); }
    std::string report_dir() const { return out + "/reports"; }
};

/// Generates train and test cohorts for every institution plus manifests.
/// Refuses to overwrite an existing non-empty data directory unless force.
void cmd_generate(const ExperimentConfig& config, bool force);

/// Trains the configured regime and persists the model under
/// <out>/models/<regime>/. Centralized regimes run in-process; the federated
/// regime runs an aggregator in-process and one collaborator child process
/// per institution, speaking the wire protocol over loopback. A session
/// recording lands next to the federated model.
void cmd_train(const ExperimentConfig& config);

/// Collaborator process entry (used by cmd_train's children and for
/// multi-host runs).
int run_collaborator_process(const ExperimentConfig& config, const std::string& institution,
                             const std::string& host, int port);

/// Aggregator process entry for multi-host runs.
void run_aggregator_process(const ExperimentConfig& config);

struct EvaluatedModel {
    Regime regime;
    std::vector<std::vector<stats::EvalRecord>> records;  // per test institution
};

/// Evaluates every model present under <out>/models against every test
/// institution and writes the report files (see README): per-record CSVs,
/// metric tables, pairwise Wilcoxon p-values against the federated model,
/// correlations with ground-truth PD, and scatter data.
void cmd_evaluate(const ExperimentConfig& config);

/// In-memory evaluation of one model over one test set, ordered by
/// (subject_id, image_id).
std::vector<stats::EvalRecord> evaluate_model(const cascade::CascadeModel& model,
                                              const std::vector<phantom::PhantomSample>& test_set,
                                              double tag_threshold);

}  // namespace mammofl::harness
