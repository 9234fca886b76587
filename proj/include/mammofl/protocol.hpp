#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mammofl/errors.hpp"

namespace mammofl::fed {

/// Wire frame: payload length u32 LE | type u8 | payload. All integers are
/// little-endian. Payloads per type:
///
///   0x01 HELLO        id length u16 | id UTF-8 | sample count u64
///   0x02 ROUND_START  round u32 | blob length u32 | breast MFLW blob
///                               | blob length u32 | dense MFLW blob
///   0x03 LOCAL_UPDATE round u32 | sample count u64 | two blobs as above
///   0x04 SHUTDOWN     two blobs as above (final weights)
///   0x7f ERROR        code u16 | detail UTF-8 (to end of payload)
///
/// There is deliberately no message type that can carry raster data; only
/// network weights ever cross the wire. A decoder must consume the payload
/// exactly; leftovers or overruns are protocol errors.
enum class MsgType : std::uint8_t {
    Hello = 0x01,
    RoundStart = 0x02,
    LocalUpdate = 0x03,
    Shutdown = 0x04,
    Error = 0x7f,
};

enum class ErrCode : std::uint16_t {
    Protocol = 1,     // malformed frame, bad length, unknown type
    DuplicateId = 2,  // second HELLO for an id (or an unexpected id)
    WrongRound = 3,   // update for a round other than the current one
    Mismatch = 4,     // weight names/shapes disagree
    Aborted = 5,      // federation torn down (peer failure elsewhere)
};

struct HelloMsg {
    std::string collaborator_id;
    std::uint64_t sample_count = 0;
};

struct RoundStartMsg {
    std::uint32_t round = 0;
    std::vector<std::uint8_t> breast_blob;
    std::vector<std::uint8_t> dense_blob;
};

struct LocalUpdateMsg {
    std::uint32_t round = 0;
    std::uint64_t sample_count = 0;
    std::vector<std::uint8_t> breast_blob;
    std::vector<std::uint8_t> dense_blob;
};

struct ShutdownMsg {
    std::vector<std::uint8_t> breast_blob;
    std::vector<std::uint8_t> dense_blob;
};

struct ErrorMsg {
    std::uint16_t code = 0;
    std::string detail;
};

using Message = std::variant<HelloMsg, RoundStartMsg, LocalUpdateMsg, ShutdownMsg, ErrorMsg>;

constexpr std::size_t kMaxFramePayload = 256ull << 20;

/// Full frame bytes including the length prefix and type byte.
std::vector<std::uint8_t> encode_frame(const Message& msg);

/// Decodes one payload; throws ProtocolError on unknown type, short or
/// overlong payloads.
Message decode_payload(std::uint8_t type, std::span<const std::uint8_t> payload);

MsgType message_type(const Message& msg);

/// Recorded-session file: a concatenation of envelopes
///   direction u8 (0 = received by aggregator, 1 = sent)
///   peer id length u16 | peer id | frame bytes (length u32 | type | payload)
struct RecordedFrame {
    bool sent = false;
    std::string peer;
    Message message;
};

void append_record(std::vector<std::uint8_t>& out, bool sent, const std::string& peer,
                   std::span<const std::uint8_t> frame);
std::vector<RecordedFrame> parse_session(std::span<const std::uint8_t> bytes);

}  // namespace mammofl::fed
