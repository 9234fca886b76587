#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mammofl/protocol.hpp"
#include "mammofl/weights.hpp"

namespace mammofl::fed {

struct CollaboratorInfo {
    std::string collaborator_id;
    std::uint64_t sample_count = 0;  // n_i, the images held locally
};

struct WeightedUpdate {
    std::string collaborator_id;
    nn::ModelWeights weights;
    std::uint64_t sample_count = 0;
};

/// Sample-count-weighted average: w = sum(n_i * w_i) / sum(n_i), accumulated
/// in 64-bit, summed in ascending collaborator id order, stored back in
/// 32-bit. Name sets and shapes must agree across updates.
nn::ModelWeights aggregate(const std::vector<WeightedUpdate>& updates);

struct AggregatorConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks an ephemeral port
    int rounds = 30;
    std::vector<std::string> expected_collaborators;
    nn::ModelWeights initial_breast;
    nn::ModelWeights initial_dense;
    std::string record_path;  // empty disables session recording
    double hello_timeout_s = 120.0;
    double round_timeout_s = 3600.0;
};

struct FederationResult {
    nn::ModelWeights breast;
    nn::ModelWeights dense;
    int rounds_completed = 0;
};

/// Synchronous-round aggregator. Connections are served concurrently; each
/// round is a barrier: no aggregation until every expected update arrived.
/// Every protocol violation, straggler timeout or mid-round disconnect sends
/// an ERROR frame to the surviving collaborators and aborts (no partial
/// aggregation). Adam state never crosses the wire: the protocol carries
/// weights only.
class Aggregator {
public:
    explicit Aggregator(AggregatorConfig cfg);  // binds and listens
    ~Aggregator();

    int port() const;  // actual bound port
    FederationResult run();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Local training hooks the collaborator drives each round.
class TrainerBackend {
public:
    virtual ~TrainerBackend() = default;
    virtual std::uint64_t sample_count() const = 0;
    virtual void load_global(const nn::ModelWeights& breast, const nn::ModelWeights& dense) = 0;
    virtual void train_round(std::uint32_t round) = 0;
    virtual std::pair<nn::ModelWeights, nn::ModelWeights> current_weights() const = 0;
};

struct CollaboratorOptions {
    std::string id;
    std::string host = "127.0.0.1";
    int port = 0;
    int connect_attempts = 3;  // bounded backoff between attempts
};

/// Runs the collaborator loop until SHUTDOWN. Returns the final global
/// weights from the SHUTDOWN frame. Throws ProtocolError on ERROR frames or
/// violations, DataError when the connection cannot be established.
FederationResult run_collaborator(const CollaboratorOptions& options, TrainerBackend& backend);

/// Offline replay oracle: rebuilds the per-round aggregation from a recorded
/// session's received frames. The result must match the live aggregator
/// bit for bit.
FederationResult replay_session(std::span<const std::uint8_t> session_bytes);

}  // namespace mammofl::fed
