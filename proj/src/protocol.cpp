#include "mammofl/protocol.hpp"

namespace mammofl::fed {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_blob(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& blob) {
    if (blob.size() > 0xffffffffull) throw ProtocolError("weight blob too large for frame");
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw ProtocolError("frame payload truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
    std::vector<std::uint8_t> blob() {
        const std::uint32_t n = u32();
        need(n);
        std::vector<std::uint8_t> b(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return b;
    }
    void done() const {
        if (pos != bytes.size()) throw ProtocolError("frame payload has trailing bytes");
    }
};

}  // namespace

MsgType message_type(const Message& msg) {
    if (std::holds_alternative<HelloMsg>(msg)) return MsgType::Hello;
    if (std::holds_alternative<RoundStartMsg>(msg)) return MsgType::RoundStart;
    if (std::holds_alternative<LocalUpdateMsg>(msg)) return MsgType::LocalUpdate;
    if (std::holds_alternative<ShutdownMsg>(msg)) return MsgType::Shutdown;
    return MsgType::Error;
}

std::vector<std::uint8_t> encode_frame(const Message& msg) {
    std::vector<std::uint8_t> payload;
    if (const auto* m = std::get_if<HelloMsg>(&msg)) {
        if (m->collaborator_id.empty() || m->collaborator_id.size() > 0xffff)
            throw ProtocolError("bad collaborator id length");
        put_u16(payload, static_cast<std::uint16_t>(m->collaborator_id.size()));
        payload.insert(payload.end(), m->collaborator_id.begin(), m->collaborator_id.end());
        put_u64(payload, m->sample_count);
    } else if (const auto* m = std::get_if<RoundStartMsg>(&msg)) {
        put_u32(payload, m->round);
        put_blob(payload, m->breast_blob);
        put_blob(payload, m->dense_blob);
    } else if (const auto* m = std::get_if<LocalUpdateMsg>(&msg)) {
        put_u32(payload, m->round);
        put_u64(payload, m->sample_count);
        put_blob(payload, m->breast_blob);
        put_blob(payload, m->dense_blob);
    } else if (const auto* m = std::get_if<ShutdownMsg>(&msg)) {
        put_blob(payload, m->breast_blob);
        put_blob(payload, m->dense_blob);
    } else {
        const auto& e = std::get<ErrorMsg>(msg);
        put_u16(payload, e.code);
        payload.insert(payload.end(), e.detail.begin(), e.detail.end());
    }
    if (payload.size() > kMaxFramePayload) throw ProtocolError("frame payload too large");

    std::vector<std::uint8_t> frame;
    frame.reserve(payload.size() + 5);
    put_u32(frame, static_cast<std::uint32_t>(payload.size()));
    frame.push_back(static_cast<std::uint8_t>(message_type(msg)));
    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

Message decode_payload(std::uint8_t type, std::span<const std::uint8_t> payload) {
    Reader r{payload};
    switch (static_cast<MsgType>(type)) {
        case MsgType::Hello: {
            HelloMsg m;
            const std::uint16_t n = r.u16();
            if (n == 0) throw ProtocolError("empty collaborator id");
            m.collaborator_id = r.str(n);
            m.sample_count = r.u64();
            r.done();
            return m;
        }
        case MsgType::RoundStart: {
            RoundStartMsg m;
            m.round = r.u32();
            m.breast_blob = r.blob();
            m.dense_blob = r.blob();
            r.done();
            return m;
        }
        case MsgType::LocalUpdate: {
            LocalUpdateMsg m;
            m.round = r.u32();
            m.sample_count = r.u64();
            m.breast_blob = r.blob();
            m.dense_blob = r.blob();
            r.done();
            return m;
        }
        case MsgType::Shutdown: {
            ShutdownMsg m;
            m.breast_blob = r.blob();
            m.dense_blob = r.blob();
            r.done();
            return m;
        }
        case MsgType::Error: {
            ErrorMsg m;
            m.code = r.u16();
            m.detail = r.str(payload.size() - r.pos);
            return m;
        }
        default:
            throw ProtocolError("unknown frame type 0x" + std::to_string(type));
    }
}

void append_record(std::vector<std::uint8_t>& out, bool sent, const std::string& peer,
                   std::span<const std::uint8_t> frame) {
    out.push_back(sent ? 1 : 0);
    if (peer.size() > 0xffff) throw ProtocolError("peer id too long to record");
    put_u16(out, static_cast<std::uint16_t>(peer.size()));
    out.insert(out.end(), peer.begin(), peer.end());
    out.insert(out.end(), frame.begin(), frame.end());
}

std::vector<RecordedFrame> parse_session(std::span<const std::uint8_t> bytes) {
    std::vector<RecordedFrame> frames;
    Reader r{bytes};
    while (r.pos < bytes.size()) {
        RecordedFrame rec;
        const std::uint8_t dir = r.u8();
        if (dir > 1) throw ProtocolError("bad direction byte in session file");
        rec.sent = dir == 1;
        const std::uint16_t id_len = r.u16();
        rec.peer = r.str(id_len);
        const std::uint32_t payload_len = r.u32();
        if (payload_len > kMaxFramePayload) throw ProtocolError("recorded frame too large");
        const std::uint8_t type = r.u8();
        r.need(payload_len);
        rec.message = decode_payload(
            type, std::span(bytes.data() + r.pos, static_cast<std::size_t>(payload_len)));
        r.pos += payload_len;
        frames.push_back(std::move(rec));
    }
    return frames;
}

}  // namespace mammofl::fed
