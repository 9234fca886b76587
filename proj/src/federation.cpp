#include "mammofl/federation.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "mammofl/serialize.hpp"

namespace mammofl::fed {

namespace {

// ---------------------------------------------------------------------------
// minimal RAII socket layer
// ---------------------------------------------------------------------------

struct Socket {
    int fd = -1;

    Socket() = default;
    explicit Socket(int f) : fd(f) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& o) noexcept : fd(o.fd) { o.fd = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close_fd();
            fd = o.fd;
            o.fd = -1;
        }
        return *this;
    }
    ~Socket() { close_fd(); }

    void close_fd() {
        if (fd >= 0) {
            ::close(fd);
            fd = -1;
        }
    }
    // unblocks any thread stuck in recv/send on this socket
    void shutdown_both() {
        if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
    bool valid() const { return fd >= 0; }
};

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
        if (n <= 0) throw ProtocolError("socket write failed: " + std::string(std::strerror(errno)));
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

/// Reads exactly len bytes; returns false on a clean EOF at offset 0.
bool read_exact(int fd, std::uint8_t* data, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd, data + got, len - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw ProtocolError("connection closed mid-frame");
        }
        if (n < 0) throw ProtocolError("socket read failed: " + std::string(std::strerror(errno)));
        got += static_cast<std::size_t>(n);
    }
    return true;
}

struct RawFrame {
    std::uint8_t type = 0;
    std::vector<std::uint8_t> payload;

    std::vector<std::uint8_t> bytes() const {
        std::vector<std::uint8_t> out;
        out.reserve(payload.size() + 5);
        const std::uint32_t len = static_cast<std::uint32_t>(payload.size());
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xff));
        out.push_back(type);
        out.insert(out.end(), payload.begin(), payload.end());
        return out;
    }
};

/// Reads one frame; empty optional on clean EOF at a frame boundary.
std::optional<RawFrame> read_frame(int fd) {
    std::uint8_t header[5];
    if (!read_exact(fd, header, 4)) return std::nullopt;
    if (!read_exact(fd, header + 4, 1)) throw ProtocolError("connection closed mid-frame");
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[i]) << (8 * i);
    if (len > kMaxFramePayload) throw ProtocolError("declared frame length exceeds limit");
    RawFrame f;
    f.type = header[4];
    f.payload.resize(len);
    if (len > 0 && !read_exact(fd, f.payload.data(), len))
        throw ProtocolError("connection closed mid-frame");
    return f;
}

void send_message(int fd, const Message& msg) {
    const auto frame = encode_frame(msg);
    write_all(fd, frame.data(), frame.size());
}

sockaddr_in make_addr(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw ConfigError("bad IPv4 address: " + host);
    return addr;
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> weights_to_blobs(
    const nn::ModelWeights& breast, const nn::ModelWeights& dense) {
    return {nn::encode_weights(breast), nn::encode_weights(dense)};
}

}  // namespace

// ---------------------------------------------------------------------------

nn::ModelWeights aggregate(const std::vector<WeightedUpdate>& updates) {
    if (updates.empty()) throw ConfigError("aggregate needs at least one update");
    std::vector<const WeightedUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) ordered.push_back(&u);
    std::sort(ordered.begin(), ordered.end(), [](const WeightedUpdate* a, const WeightedUpdate* b) {
        return a->collaborator_id < b->collaborator_id;
    });

    const nn::ModelWeights& ref = ordered.front()->weights;
    double total = 0.0;
    for (const auto* u : ordered) {
        if (u->sample_count == 0) throw ConfigError("collaborator sample count must be >= 1");
        if (!u->weights.same_structure(ref))
            throw ConfigError("update from " + u->collaborator_id + " has mismatched weight shapes");
        total += static_cast<double>(u->sample_count);
    }

    nn::ModelWeights out;
    for (const auto& [name, t] : ref.entries) {
        std::vector<double> acc(t.data.size(), 0.0);
        for (const auto* u : ordered) {
            const double n = static_cast<double>(u->sample_count);
            const auto& data = u->weights.entries.at(name).data;
            for (std::size_t i = 0; i < data.size(); ++i) acc[i] += n * static_cast<double>(data[i]);
        }
        std::vector<float> result(acc.size());
        for (std::size_t i = 0; i < acc.size(); ++i) result[i] = static_cast<float>(acc[i] / total);
        out.entries.emplace(name, nn::Tensor(t.dims, std::move(result)));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Aggregator::Impl {
    AggregatorConfig cfg;
    Socket listener;
    int bound_port = 0;

    struct Conn {
        Socket sock;
        std::string id;  // empty until HELLO accepted
        bool closed = false;
    };

    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::unique_ptr<Conn>> conns;  // append-only during registration
    std::vector<std::thread> readers;
    std::map<std::string, std::uint64_t> hello_counts;
    std::uint32_t current_round = 0;
    std::map<std::string, LocalUpdateMsg> round_updates;
    bool shutdown_sent = false;
    bool failed = false;
    std::string failure;
    ErrCode failure_code = ErrCode::Protocol;

    std::vector<std::uint8_t> record;
    std::mutex record_mu;

    void note_failure(ErrCode code, const std::string& what) {
        {
            std::lock_guard lk(mu);
            if (!failed) {
                failed = true;
                failure = what;
                failure_code = code;
            }
        }
        cv.notify_all();
    }

    bool has_failed() {
        std::lock_guard lk(mu);
        return failed;
    }

    void record_frame(bool sent, const std::string& peer, std::span<const std::uint8_t> frame) {
        if (cfg.record_path.empty()) return;
        std::lock_guard lk(record_mu);
        append_record(record, sent, peer, frame);
    }

    void reader_loop(Conn* conn);
};

void Aggregator::Impl::reader_loop(Conn* conn) {
    auto mark_closed = [this, conn] {
        {
            std::lock_guard lk(mu);
            conn->closed = true;
        }
        cv.notify_all();
    };

    try {
        for (;;) {
            auto raw = read_frame(conn->sock.fd);
            if (!raw) {
                bool abort;
                {
                    std::lock_guard lk(mu);
                    abort = !shutdown_sent && !conn->id.empty();
                }
                if (abort)
                    note_failure(ErrCode::Aborted,
                                 "collaborator '" + conn->id + "' disconnected mid-federation");
                mark_closed();
                return;
            }
            record_frame(false, conn->id, raw->bytes());
            const Message msg = decode_payload(raw->type, raw->payload);

            if (const auto* hello = std::get_if<HelloMsg>(&msg)) {
                bool reject = false;
                std::string reject_reason;
                {
                    std::lock_guard lk(mu);
                    if (!conn->id.empty()) throw ProtocolError("second HELLO on one connection");
                    const std::string& id = hello->collaborator_id;
                    const bool expected = std::find(cfg.expected_collaborators.begin(),
                                                    cfg.expected_collaborators.end(),
                                                    id) != cfg.expected_collaborators.end();
                    if (!expected) {
                        reject = true;
                        reject_reason = "unexpected collaborator id " + id;
                    } else if (hello_counts.contains(id)) {
                        reject = true;
                        reject_reason = "duplicate collaborator id " + id;
                    } else if (hello->sample_count == 0) {
                        throw ProtocolError("collaborator " + id + " reports zero samples");
                    } else {
                        conn->id = id;
                        hello_counts[id] = hello->sample_count;
                    }
                }
                if (reject) {
                    // reject this connection only; the federation survives
                    const ErrorMsg err{static_cast<std::uint16_t>(ErrCode::DuplicateId),
                                       reject_reason};
                    const auto frame = encode_frame(err);
                    try {
                        write_all(conn->sock.fd, frame.data(), frame.size());
                        record_frame(true, hello->collaborator_id, frame);
                    } catch (...) {
                    }
                    conn->sock.shutdown_both();
                    mark_closed();
                    return;
                }
                cv.notify_all();
            } else if (const auto* update = std::get_if<LocalUpdateMsg>(&msg)) {
                {
                    std::lock_guard lk(mu);
                    if (conn->id.empty()) throw ProtocolError("LOCAL_UPDATE before HELLO");
                    if (update->round != current_round) {
                        if (!failed) {
                            failed = true;
                            failure = "collaborator '" + conn->id + "' sent an update for round " +
                                      std::to_string(update->round) + " during round " +
                                      std::to_string(current_round);
                            failure_code = ErrCode::WrongRound;
                        }
                    } else if (round_updates.contains(conn->id)) {
                        if (!failed) {
                            failed = true;
                            failure = "duplicate update from '" + conn->id + "' in round " +
                                      std::to_string(current_round);
                            failure_code = ErrCode::Protocol;
                        }
                    } else {
                        round_updates[conn->id] = *update;
                    }
                }
                cv.notify_all();
            } else if (const auto* err = std::get_if<ErrorMsg>(&msg)) {
                note_failure(ErrCode::Aborted, "collaborator '" + conn->id + "' reported error " +
                                                   std::to_string(err->code) + ": " + err->detail);
                mark_closed();
                return;
            } else {
                throw ProtocolError("unexpected frame type from collaborator '" + conn->id + "'");
            }
        }
    } catch (const std::exception& e) {
        note_failure(ErrCode::Protocol, e.what());
        mark_closed();
    }
}

Aggregator::Aggregator(AggregatorConfig cfg) : impl_(std::make_unique<Impl>()) {
    if (cfg.rounds < 0) throw ConfigError("rounds must be >= 0");
    if (cfg.expected_collaborators.empty()) throw ConfigError("no expected collaborators");
    {
        std::set<std::string> unique(cfg.expected_collaborators.begin(),
                                     cfg.expected_collaborators.end());
        if (unique.size() != cfg.expected_collaborators.size())
            throw ConfigError("expected collaborator ids must be unique");
    }
    impl_->cfg = std::move(cfg);

    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw ProtocolError("cannot create listen socket");
    const int one = 1;
    ::setsockopt(s.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(impl_->cfg.host, impl_->cfg.port);
    if (::bind(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw ProtocolError("cannot bind " + impl_->cfg.host + ":" +
                            std::to_string(impl_->cfg.port) + ": " + std::strerror(errno));
    if (::listen(s.fd, 16) != 0) throw ProtocolError("listen failed");
    sockaddr_in bound{};
    socklen_t blen = sizeof bound;
    ::getsockname(s.fd, reinterpret_cast<sockaddr*>(&bound), &blen);
    impl_->bound_port = ntohs(bound.sin_port);
    impl_->listener = std::move(s);
}

Aggregator::~Aggregator() {
    if (!impl_) return;
    for (auto& c : impl_->conns) c->sock.shutdown_both();
    impl_->listener.shutdown_both();
    for (auto& t : impl_->readers)
        if (t.joinable()) t.join();
}

int Aggregator::port() const { return impl_->bound_port; }

FederationResult Aggregator::run() {
    Impl& im = *impl_;
    const std::size_t n_expected = im.cfg.expected_collaborators.size();

    auto abort_federation = [&im]() -> ProtocolError {
        std::string detail;
        ErrCode code;
        {
            std::lock_guard lk(im.mu);
            detail = im.failure.empty() ? "federation aborted" : im.failure;
            code = im.failure_code;
        }
        const ErrorMsg err{static_cast<std::uint16_t>(code), detail};
        const auto frame = encode_frame(err);
        for (auto& c : im.conns) {
            bool live;
            std::string peer;
            {
                std::lock_guard lk(im.mu);
                live = !c->closed && c->sock.valid() && !c->id.empty();
                peer = c->id;
            }
            if (live) {
                try {
                    write_all(c->sock.fd, frame.data(), frame.size());
                    im.record_frame(true, peer, frame);
                } catch (...) {
                }
            }
            c->sock.shutdown_both();
        }
        return ProtocolError("federation aborted: " + detail);
    };

    // registration: accept until every expected collaborator said HELLO
    const auto hello_deadline = std::chrono::steady_clock::now() +
                                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(im.cfg.hello_timeout_s));
    for (;;) {
        {
            std::lock_guard lk(im.mu);
            if (im.failed || im.hello_counts.size() == n_expected) break;
        }
        if (std::chrono::steady_clock::now() > hello_deadline) {
            im.note_failure(ErrCode::Aborted, "timed out waiting for collaborators to join");
            break;
        }
        pollfd p{im.listener.fd, POLLIN, 0};
        if (::poll(&p, 1, 200) <= 0) continue;
        const int cfd = ::accept(im.listener.fd, nullptr, nullptr);
        if (cfd < 0) continue;
        auto conn = std::make_unique<Impl::Conn>();
        conn->sock = Socket(cfd);
        Impl::Conn* raw = conn.get();
        {
            std::lock_guard lk(im.mu);
            im.conns.push_back(std::move(conn));
        }
        im.readers.emplace_back([&im, raw] { im.reader_loop(raw); });
    }
    if (im.has_failed()) throw abort_federation();

    nn::ModelWeights breast = im.cfg.initial_breast;
    nn::ModelWeights dense = im.cfg.initial_dense;

    for (int r = 1; r <= im.cfg.rounds; ++r) {
        {
            std::lock_guard lk(im.mu);
            im.current_round = static_cast<std::uint32_t>(r);
            im.round_updates.clear();
        }
        {
            auto [bblob, dblob] = weights_to_blobs(breast, dense);
            const RoundStartMsg start{static_cast<std::uint32_t>(r), std::move(bblob),
                                      std::move(dblob)};
            const auto frame = encode_frame(start);
            for (auto& c : im.conns) {
                bool live;
                std::string peer;
                {
                    std::lock_guard lk(im.mu);
                    live = !c->id.empty() && !c->closed;
                    peer = c->id;
                }
                if (!live) continue;
                try {
                    write_all(c->sock.fd, frame.data(), frame.size());
                    im.record_frame(true, peer, frame);
                } catch (const std::exception& e) {
                    im.note_failure(ErrCode::Aborted, e.what());
                    break;
                }
            }
        }

        // barrier: all expected updates for this round, or failure/timeout
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(im.cfg.round_timeout_s));
        {
            std::unique_lock lk(im.mu);
            const bool complete = im.cv.wait_until(lk, deadline, [&im, n_expected] {
                return im.failed || im.round_updates.size() == n_expected;
            });
            if (!complete && !im.failed) {
                im.failed = true;
                im.failure = "round " + std::to_string(r) + " timed out";
                im.failure_code = ErrCode::Aborted;
            }
        }
        if (im.has_failed()) throw abort_federation();

        std::map<std::string, LocalUpdateMsg> updates;
        {
            std::lock_guard lk(im.mu);
            updates = im.round_updates;
        }
        try {
            std::vector<WeightedUpdate> breast_updates, dense_updates;
            for (const auto& [id, u] : updates) {
                breast_updates.push_back(
                    {id, nn::decode_weights(std::span(u.breast_blob)), u.sample_count});
                dense_updates.push_back(
                    {id, nn::decode_weights(std::span(u.dense_blob)), u.sample_count});
            }
            breast = aggregate(breast_updates);
            dense = aggregate(dense_updates);
        } catch (const std::exception& e) {
            im.note_failure(ErrCode::Mismatch, e.what());
        }
        if (im.has_failed()) throw abort_federation();
    }

    // final broadcast
    {
        auto [bblob, dblob] = weights_to_blobs(breast, dense);
        const ShutdownMsg bye{std::move(bblob), std::move(dblob)};
        const auto frame = encode_frame(bye);
        {
            std::lock_guard lk(im.mu);
            im.shutdown_sent = true;
        }
        for (auto& c : im.conns) {
            bool live;
            std::string peer;
            {
                std::lock_guard lk(im.mu);
                live = !c->id.empty() && !c->closed;
                peer = c->id;
            }
            if (!live) continue;
            try {
                write_all(c->sock.fd, frame.data(), frame.size());
                im.record_frame(true, peer, frame);
            } catch (...) {
            }
            c->sock.shutdown_both();
        }
    }
    for (auto& t : im.readers)
        if (t.joinable()) t.join();
    im.readers.clear();

    if (!im.cfg.record_path.empty()) {
        std::ofstream f(im.cfg.record_path, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write session record " + im.cfg.record_path);
        f.write(reinterpret_cast<const char*>(im.record.data()),
                static_cast<std::streamsize>(im.record.size()));
        if (!f) throw DataError("short write to " + im.cfg.record_path);
    }

    return {std::move(breast), std::move(dense), im.cfg.rounds};
}

// ---------------------------------------------------------------------------

FederationResult run_collaborator(const CollaboratorOptions& options, TrainerBackend& backend) {
    if (options.id.empty()) throw ConfigError("collaborator id must not be empty");

    Socket sock;
    int delay_ms = 250;
    for (int attempt = 1;; ++attempt) {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (!s.valid()) throw ProtocolError("cannot create socket");
        sockaddr_in addr = make_addr(options.host, options.port);
        if (::connect(s.fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
            sock = std::move(s);
            break;
        }
        if (attempt >= options.connect_attempts)
            throw DataError("cannot connect to aggregator at " + options.host + ":" +
                            std::to_string(options.port) + " after " + std::to_string(attempt) +
                            " attempts");
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= 2;
    }

    send_message(sock.fd, HelloMsg{options.id, backend.sample_count()});

    for (;;) {
        auto raw = read_frame(sock.fd);
        if (!raw) throw ProtocolError("aggregator closed the connection unexpectedly");
        const Message msg = decode_payload(raw->type, raw->payload);

        if (const auto* start = std::get_if<RoundStartMsg>(&msg)) {
            backend.load_global(nn::decode_weights(std::span(start->breast_blob)),
                                nn::decode_weights(std::span(start->dense_blob)));
            backend.train_round(start->round);
            auto [breast, dense] = backend.current_weights();
            auto [bblob, dblob] = weights_to_blobs(breast, dense);
            send_message(sock.fd, LocalUpdateMsg{start->round, backend.sample_count(),
                                                 std::move(bblob), std::move(dblob)});
        } else if (const auto* bye = std::get_if<ShutdownMsg>(&msg)) {
            FederationResult result;
            result.breast = nn::decode_weights(std::span(bye->breast_blob));
            result.dense = nn::decode_weights(std::span(bye->dense_blob));
            return result;
        } else if (const auto* err = std::get_if<ErrorMsg>(&msg)) {
            throw ProtocolError("aggregator error " + std::to_string(err->code) + ": " +
                                err->detail);
        } else {
            throw ProtocolError("unexpected frame from aggregator");
        }
    }
}

// ---------------------------------------------------------------------------

FederationResult replay_session(std::span<const std::uint8_t> session_bytes) {
    const std::vector<RecordedFrame> frames = parse_session(session_bytes);

    std::set<std::string> collaborators;
    for (const RecordedFrame& f : frames)
        if (!f.sent && std::holds_alternative<HelloMsg>(f.message))
            collaborators.insert(std::get<HelloMsg>(f.message).collaborator_id);
    if (collaborators.empty()) throw ProtocolError("session contains no HELLO frames");

    FederationResult result;
    bool have_weights = false;
    std::uint32_t round = 1;
    std::map<std::string, LocalUpdateMsg> pending;

    for (const RecordedFrame& f : frames) {
        if (f.sent) continue;  // replay recomputes from received updates only
        if (const auto* upd = std::get_if<LocalUpdateMsg>(&f.message)) {
            if (upd->round != round)
                throw ProtocolError("recorded update for round " + std::to_string(upd->round) +
                                    " while replaying round " + std::to_string(round));
            if (pending.contains(f.peer))
                throw ProtocolError("duplicate recorded update from " + f.peer);
            pending[f.peer] = *upd;
            if (pending.size() == collaborators.size()) {
                std::vector<WeightedUpdate> breast_updates, dense_updates;
                for (const auto& [id, u] : pending) {
                    breast_updates.push_back(
                        {id, nn::decode_weights(std::span(u.breast_blob)), u.sample_count});
                    dense_updates.push_back(
                        {id, nn::decode_weights(std::span(u.dense_blob)), u.sample_count});
                }
                result.breast = aggregate(breast_updates);
                result.dense = aggregate(dense_updates);
                have_weights = true;
                result.rounds_completed = static_cast<int>(round);
                pending.clear();
                ++round;
            }
        }
    }
    if (!pending.empty()) throw ProtocolError("session ends with an incomplete round");
    if (!have_weights) throw ProtocolError("session contains no completed rounds");
    return result;
}

}  // namespace mammofl::fed
