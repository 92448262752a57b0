#include "mpijpeg/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace mpijpeg::jpeg {

namespace {

constexpr Table8x8 kBaseLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr Table8x8 kBaseChroma = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

struct HuffmanSpec {
    std::array<std::uint8_t, 16> counts;
    std::vector<std::uint8_t> symbols;
};

// Annex K.3 example tables.
const HuffmanSpec kDcLuma{{0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
                          {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
const HuffmanSpec kDcChroma{{0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                            {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
const HuffmanSpec kAcLuma{
    {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d},
    {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
     0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
     0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
     0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
     0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
     0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
     0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
     0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
     0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
     0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
     0xf9, 0xfa}};
const HuffmanSpec kAcChroma{
    {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77},
    {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
     0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
     0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
     0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
     0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
     0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
     0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
     0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
     0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
     0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
     0xf9, 0xfa}};

struct Code {
    std::uint16_t bits = 0;
    std::uint8_t length = 0;
};

// Canonical code assignment (Annex C).
std::array<Code, 256> build_encoder_table(const HuffmanSpec& spec) {
    std::array<Code, 256> table{};
    std::uint16_t code = 0;
    std::size_t k = 0;
    for (int len = 1; len <= 16; ++len) {
        for (int i = 0; i < spec.counts[static_cast<std::size_t>(len - 1)]; ++i) {
            table[spec.symbols[k++]] = {code++, static_cast<std::uint8_t>(len)};
        }
        code <<= 1;
    }
    return table;
}

int magnitude_category(int v) {
    int a = std::abs(v), n = 0;
    while (a) {
        ++n;
        a >>= 1;
    }
    return n;
}

class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void put(std::uint32_t bits, int length) {
        for (int i = length - 1; i >= 0; --i) {
            acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((bits >> i) & 1u));
            if (++count_ == 8) emit();
        }
    }

    void flush() {
        while (count_ != 0) put(1, 1);  // pad with ones
    }

private:
    void emit() {
        out_.push_back(acc_);
        if (acc_ == 0xFF) out_.push_back(0x00);
        acc_ = 0;
        count_ = 0;
    }

    std::vector<std::uint8_t>& out_;
    std::uint8_t acc_ = 0;
    int count_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, int v) {
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void write_dht(std::vector<std::uint8_t>& out, int table_class, int id, const HuffmanSpec& spec) {
    out.push_back(0xFF);
    out.push_back(0xC4);
    put_u16(out, 2 + 1 + 16 + static_cast<int>(spec.symbols.size()));
    out.push_back(static_cast<std::uint8_t>((table_class << 4) | id));
    out.insert(out.end(), spec.counts.begin(), spec.counts.end());
    out.insert(out.end(), spec.symbols.begin(), spec.symbols.end());
}

// Component plane on the 0..255 scale, row-major.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> samples;
    double& at(int y, int x) { return samples[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return samples[static_cast<std::size_t>(y) * width + x]; }
};

std::array<double, 64> block_at(const Plane& p, int bx, int by) {
    std::array<double, 64> b{};
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) b[static_cast<std::size_t>(y * 8 + x)] = p.at(by * 8 + y, bx * 8 + x) - 128.0;
    return b;
}

std::array<Plane, 3> color_planes_padded(const Image& rgb, int mcu) {
    const int w = rgb.width(), h = rgb.height();
    const int pw = (w + mcu - 1) / mcu * mcu, ph = (h + mcu - 1) / mcu * mcu;
    std::array<Plane, 3> planes;
    for (auto& p : planes) {
        p.width = pw;
        p.height = ph;
        p.samples.resize(static_cast<std::size_t>(pw) * ph);
    }
    for (int y = 0; y < ph; ++y) {
        const int sy = std::min(y, h - 1);
        for (int x = 0; x < pw; ++x) {
            const int sx = std::min(x, w - 1);
            double v[3];
            for (int c = 0; c < 3; ++c) {
                v[c] = std::nearbyint(std::clamp(static_cast<double>(rgb.at(sy, sx, c)), 0.0, 1.0) * 255.0);
            }
            rgb_to_ycbcr(v[0], v[1], v[2], planes[0].at(y, x), planes[1].at(y, x), planes[2].at(y, x));
        }
    }
    return planes;
}

Plane downsample2x2(const Plane& p) {
    Plane out{p.width / 2, p.height / 2, {}};
    out.samples.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            out.at(y, x) = (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                            p.at(2 * y + 1, 2 * x + 1)) / 4.0;
        }
    return out;
}

void check_encodable(const Image& rgb) {
    if (rgb.channels() != 3) throw ShapeError("jpeg encode: expected 3 channels");
    if (rgb.width() < 8 || rgb.height() < 8) throw ShapeError("jpeg encode: image smaller than 8x8");
    if (rgb.width() > 65535 || rgb.height() > 65535) throw ShapeError("jpeg encode: image too large");
}

std::array<int, 64> quantize_block(const std::array<double, 64>& coeffs, const Table8x8& q) {
    std::array<int, 64> out{};
    for (std::size_t i = 0; i < 64; ++i) out[i] = static_cast<int>(std::nearbyint(coeffs[i] / q[i]));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Decoder

struct DecodeTable {
    std::array<int, 18> maxcode{};
    std::array<int, 17> valptr{};
    std::array<int, 17> mincode{};
    std::vector<std::uint8_t> symbols;
    bool present = false;
};

DecodeTable build_decode_table(const std::array<std::uint8_t, 16>& counts, std::vector<std::uint8_t> symbols) {
    DecodeTable t;
    t.symbols = std::move(symbols);
    t.present = true;
    int code = 0, k = 0;
    for (int len = 1; len <= 16; ++len) {
        const int n = counts[static_cast<std::size_t>(len - 1)];
        t.valptr[len] = k;
        t.mincode[len] = code;
        code += n;
        k += n;
        t.maxcode[len] = n ? code - 1 : -1;
        code <<= 1;
    }
    t.maxcode[17] = 0x7FFFFFFF;
    return t;
}

class BitReader {
public:
    BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

    int bit() {
        if (count_ == 0) fill();
        --count_;
        return (acc_ >> count_) & 1;
    }

    int bits(int n) {
        int v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | bit();
        return v;
    }

    void reset() {
        count_ = 0;
        acc_ = 0;
    }

    std::size_t position() const noexcept { return pos_; }
    void set_position(std::size_t p) noexcept { pos_ = p; }
    bool hit_marker() const noexcept { return marker_; }

private:
    void fill() {
        if (marker_ || pos_ >= data_.size()) {
            if (++padding_ > 64) throw ParseError("entropy-coded data ended prematurely", pos_);
            acc_ = 0;
            count_ = 8;
            return;
        }
        std::uint8_t b = data_[pos_];
        if (b == 0xFF) {
            if (pos_ + 1 >= data_.size()) throw ParseError("truncated stuffed byte", pos_);
            if (data_[pos_ + 1] == 0x00) {
                pos_ += 2;
            } else {
                marker_ = true;
                b = 0;
            }
        } else {
            ++pos_;
        }
        acc_ = b;
        count_ = 8;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_;
    int acc_ = 0;
    int count_ = 0;
    int padding_ = 0;
    bool marker_ = false;
};

int decode_symbol(BitReader& br, const DecodeTable& t) {
    if (!t.present) throw ParseError("scan references an undefined Huffman table", br.position());
    int code = br.bit();
    int len = 1;
    while (len <= 16 && code > t.maxcode[len]) {
        code = (code << 1) | br.bit();
        ++len;
    }
    if (len > 16) throw ParseError("invalid Huffman code", br.position());
    const int idx = t.valptr[len] + code - t.mincode[len];
    if (idx < 0 || idx >= static_cast<int>(t.symbols.size())) throw ParseError("invalid Huffman code", br.position());
    return t.symbols[static_cast<std::size_t>(idx)];
}

int extend(int v, int t) { return v < (1 << (t - 1)) ? v - (1 << t) + 1 : v; }

struct Component {
    int id = 0;
    int h = 1;
    int v = 1;
    int tq = 0;
    int td = 0;
    int ta = 0;
    int blocks_w = 0;  // padded to whole MCUs
    int blocks_h = 0;
    std::vector<std::array<int, 64>> coeffs;
    int dc_pred = 0;
};

class Decoder {
public:
    explicit Decoder(std::span<const std::uint8_t> data) : data_(data) {}

    DecodedRgb8 run() {
        if (data_.size() < 4 || data_[0] != 0xFF || data_[1] != 0xD8) throw ParseError("missing SOI marker", 0);
        pos_ = 2;
        bool seen_eoi = false;
        while (!seen_eoi) {
            const std::size_t marker_pos = pos_;
            const int marker = next_marker();
            switch (marker) {
                case 0xC0:
                case 0xC1:
                    parse_sof(marker_pos);
                    break;
                case 0xC4:
                    parse_dht();
                    break;
                case 0xDB:
                    parse_dqt();
                    break;
                case 0xDD:
                    parse_dri();
                    break;
                case 0xDA:
                    parse_sos(marker_pos);
                    break;
                case 0xD9:
                    seen_eoi = true;
                    break;
                default:
                    if (marker >= 0xC2 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC) {
                        throw ParseError("unsupported (non-baseline) frame type", marker_pos);
                    }
                    skip_segment();
            }
        }
        if (!frame_seen_ || !scan_seen_) throw ParseError("stream has no frame or scan", pos_);
        return reconstruct();
    }

private:
    int next_marker() {
        if (pos_ >= data_.size()) throw ParseError("unexpected end of stream", pos_);
        if (data_[pos_] != 0xFF) throw ParseError("expected marker", pos_);
        while (pos_ < data_.size() && data_[pos_] == 0xFF) ++pos_;
        if (pos_ >= data_.size()) throw ParseError("unexpected end of stream", pos_);
        return data_[pos_++];
    }

    int u8() {
        if (pos_ >= data_.size()) throw ParseError("unexpected end of stream", pos_);
        return data_[pos_++];
    }

    int u16() {
        const int hi = u8();
        return (hi << 8) | u8();
    }

    std::size_t segment_end() {
        const std::size_t start = pos_;
        const int len = u16();
        if (len < 2 || start + static_cast<std::size_t>(len) > data_.size()) {
            throw ParseError("segment length exceeds stream", start);
        }
        return start + static_cast<std::size_t>(len);
    }

    void skip_segment() { pos_ = segment_end(); }

    void parse_dqt() {
        const std::size_t end = segment_end();
        while (pos_ < end) {
            const int pq_tq = u8();
            const int precision = pq_tq >> 4, id = pq_tq & 15;
            if (id > 3 || precision > 1) throw ParseError("invalid quantization table header", pos_ - 1);
            Table8x8 t{};
            for (int k = 0; k < 64; ++k) t[static_cast<std::size_t>(kZigzag[static_cast<std::size_t>(k)])] = precision ? u16() : u8();
            qtables_[static_cast<std::size_t>(id)] = t;
            qpresent_[static_cast<std::size_t>(id)] = true;
        }
        if (pos_ != end) throw ParseError("quantization segment length mismatch", pos_);
    }

    void parse_dht() {
        const std::size_t end = segment_end();
        while (pos_ < end) {
            const int tc_th = u8();
            const int cls = tc_th >> 4, id = tc_th & 15;
            if (cls > 1 || id > 3) throw ParseError("invalid Huffman table header", pos_ - 1);
            std::array<std::uint8_t, 16> counts{};
            int total = 0;
            for (auto& c : counts) {
                c = static_cast<std::uint8_t>(u8());
                total += c;
            }
            if (total > 256) throw ParseError("Huffman table too large", pos_);
            std::vector<std::uint8_t> symbols(static_cast<std::size_t>(total));
            for (auto& s : symbols) s = static_cast<std::uint8_t>(u8());
            (cls == 0 ? dc_ : ac_)[static_cast<std::size_t>(id)] = build_decode_table(counts, std::move(symbols));
        }
        if (pos_ != end) throw ParseError("Huffman segment length mismatch", pos_);
    }

    void parse_dri() {
        const std::size_t end = segment_end();
        restart_interval_ = u16();
        pos_ = end;
    }

    void parse_sof(std::size_t marker_pos) {
        if (frame_seen_) throw ParseError("multiple frames", marker_pos);
        const std::size_t end = segment_end();
        if (u8() != 8) throw ParseError("only 8-bit precision is supported", pos_ - 1);
        height_ = u16();
        width_ = u16();
        const int n = u8();
        if (height_ == 0 || width_ == 0) throw ParseError("zero image dimension", pos_);
        if (n != 1 && n != 3) throw ParseError("unsupported component count", pos_ - 1);
        for (int i = 0; i < n; ++i) {
            Component c;
            c.id = u8();
            const int hv = u8();
            c.h = hv >> 4;
            c.v = hv & 15;
            c.tq = u8();
            if (c.h < 1 || c.h > 4 || c.v < 1 || c.v > 4 || c.tq > 3) {
                throw ParseError("invalid component parameters", pos_ - 2);
            }
            comps_.push_back(c);
        }
        if (pos_ != end) throw ParseError("frame header length mismatch", pos_);
        for (const auto& c : comps_) {
            hmax_ = std::max(hmax_, c.h);
            vmax_ = std::max(vmax_, c.v);
        }
        mcux_ = (width_ + 8 * hmax_ - 1) / (8 * hmax_);
        mcuy_ = (height_ + 8 * vmax_ - 1) / (8 * vmax_);
        for (auto& c : comps_) {
            c.blocks_w = mcux_ * c.h;
            c.blocks_h = mcuy_ * c.v;
            c.coeffs.assign(static_cast<std::size_t>(c.blocks_w) * c.blocks_h, std::array<int, 64>{});
        }
        frame_seen_ = true;
    }

    void parse_sos(std::size_t marker_pos) {
        if (!frame_seen_) throw ParseError("scan before frame header", marker_pos);
        const std::size_t end = segment_end();
        const int ns = u8();
        if (ns < 1 || ns > static_cast<int>(comps_.size())) throw ParseError("invalid scan component count", pos_ - 1);
        std::vector<Component*> scan;
        for (int i = 0; i < ns; ++i) {
            const int id = u8();
            const int tables = u8();
            auto it = std::find_if(comps_.begin(), comps_.end(), [&](const Component& c) { return c.id == id; });
            if (it == comps_.end()) throw ParseError("scan references unknown component", pos_ - 2);
            it->td = tables >> 4;
            it->ta = tables & 15;
            if (it->td > 3 || it->ta > 3) throw ParseError("invalid table selector", pos_ - 1);
            scan.push_back(&*it);
        }
        const int ss = u8(), se = u8(), ahal = u8();
        if (ss != 0 || se != 63 || ahal != 0) throw ParseError("progressive scans are not supported", pos_ - 3);
        if (pos_ != end) throw ParseError("scan header length mismatch", pos_);
        for (auto* c : scan) {
            if (!qpresent_[static_cast<std::size_t>(c->tq)]) throw ParseError("missing quantization table", pos_);
            c->dc_pred = 0;
        }
        decode_scan(scan);
        scan_seen_ = true;
    }

    void decode_block(BitReader& br, Component& c, std::array<int, 64>& blk) {
        const int t = decode_symbol(br, dc_[static_cast<std::size_t>(c.td)]);
        if (t > 11) throw ParseError("invalid DC magnitude category", br.position());
        const int diff = t ? extend(br.bits(t), t) : 0;
        c.dc_pred += diff;
        blk.fill(0);
        blk[0] = c.dc_pred;
        for (int k = 1; k < 64;) {
            const int rs = decode_symbol(br, ac_[static_cast<std::size_t>(c.ta)]);
            const int r = rs >> 4, s = rs & 15;
            if (s == 0) {
                if (r == 15) {
                    k += 16;
                    continue;
                }
                break;  // EOB
            }
            k += r;
            if (k > 63) throw ParseError("AC coefficient index out of range", br.position());
            blk[static_cast<std::size_t>(kZigzag[static_cast<std::size_t>(k)])] = extend(br.bits(s), s);
            ++k;
        }
    }

    void handle_restart(BitReader& br, std::vector<Component*>& scan) {
        br.reset();
        std::size_t p = br.position();
        if (p + 1 >= data_.size() || data_[p] != 0xFF || data_[p + 1] < 0xD0 || data_[p + 1] > 0xD7) {
            throw ParseError("expected restart marker", p);
        }
        br = BitReader(data_, p + 2);
        for (auto* c : scan) c->dc_pred = 0;
    }

    void decode_scan(std::vector<Component*>& scan) {
        BitReader br(data_, pos_);
        int units_done = 0;
        auto maybe_restart = [&](int total) {
            ++units_done;
            if (restart_interval_ && units_done % restart_interval_ == 0 && units_done < total) {
                handle_restart(br, scan);
            }
        };
        if (scan.size() == 1) {
            Component& c = *scan[0];
            // Non-interleaved: only blocks covering the component's own extent.
            const int cw = (width_ * c.h + hmax_ - 1) / hmax_, ch = (height_ * c.v + vmax_ - 1) / vmax_;
            const int bw = (cw + 7) / 8, bh = (ch + 7) / 8;
            for (int by = 0; by < bh; ++by)
                for (int bx = 0; bx < bw; ++bx) {
                    decode_block(br, c, c.coeffs[static_cast<std::size_t>(by) * c.blocks_w + bx]);
                    maybe_restart(bw * bh);
                }
        } else {
            for (int my = 0; my < mcuy_; ++my)
                for (int mx = 0; mx < mcux_; ++mx) {
                    for (auto* c : scan)
                        for (int v = 0; v < c->v; ++v)
                            for (int h = 0; h < c->h; ++h) {
                                const int bx = mx * c->h + h, by = my * c->v + v;
                                decode_block(br, *c, c->coeffs[static_cast<std::size_t>(by) * c->blocks_w + bx]);
                            }
                    maybe_restart(mcux_ * mcuy_);
                }
        }
        // Resume marker parsing at the next marker after the entropy-coded segment.
        std::size_t p = br.position();
        while (p + 1 < data_.size() && !(data_[p] == 0xFF && data_[p + 1] != 0x00 &&
                                         !(data_[p + 1] >= 0xD0 && data_[p + 1] <= 0xD7))) {
            ++p;
        }
        if (p + 1 >= data_.size()) throw ParseError("missing EOI marker", p);
        pos_ = p;
    }

    DecodedRgb8 reconstruct() {
        std::vector<Plane> planes;
        for (const auto& c : comps_) {
            Plane p{c.blocks_w * 8, c.blocks_h * 8, {}};
            p.samples.resize(static_cast<std::size_t>(p.width) * p.height);
            const Table8x8& q = qtables_[static_cast<std::size_t>(c.tq)];
            for (int by = 0; by < c.blocks_h; ++by)
                for (int bx = 0; bx < c.blocks_w; ++bx) {
                    const auto& blk = c.coeffs[static_cast<std::size_t>(by) * c.blocks_w + bx];
                    std::array<double, 64> deq{};
                    for (std::size_t i = 0; i < 64; ++i) deq[i] = static_cast<double>(blk[i]) * q[i];
                    const auto spatial = inverse_dct(deq);
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) p.at(by * 8 + y, bx * 8 + x) = spatial[static_cast<std::size_t>(y * 8 + x)] + 128.0;
                }
            planes.push_back(std::move(p));
        }
        DecodedRgb8 out{width_, height_, std::vector<std::uint8_t>(static_cast<std::size_t>(width_) * height_ * 3)};
        auto to_u8 = [](double v) { return static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 255.0))); };
        for (int y = 0; y < height_; ++y)
            for (int x = 0; x < width_; ++x) {
                double s[3];
                for (std::size_t k = 0; k < comps_.size(); ++k) {
                    const auto& c = comps_[k];
                    s[k] = planes[k].at(y * c.v / vmax_, x * c.h / hmax_);
                }
                std::uint8_t* px = &out.pixels[(static_cast<std::size_t>(y) * width_ + x) * 3];
                if (comps_.size() == 1) {
                    px[0] = px[1] = px[2] = to_u8(s[0]);
                } else {
                    double r, g, b;
                    ycbcr_to_rgb(s[0], s[1], s[2], r, g, b);
                    px[0] = to_u8(r);
                    px[1] = to_u8(g);
                    px[2] = to_u8(b);
                }
            }
        return out;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::array<Table8x8, 4> qtables_{};
    std::array<bool, 4> qpresent_{};
    std::array<DecodeTable, 4> dc_{};
    std::array<DecodeTable, 4> ac_{};
    std::vector<Component> comps_;
    int width_ = 0, height_ = 0, hmax_ = 1, vmax_ = 1, mcux_ = 0, mcuy_ = 0;
    int restart_interval_ = 0;
    bool frame_seen_ = false, scan_seen_ = false;
};

}  // namespace

const Table8x8& base_luma_table() { return kBaseLuma; }
const Table8x8& base_chroma_table() { return kBaseChroma; }
const std::array<int, 64>& zigzag_order() { return kZigzag; }

QuantTables quant_tables_for_quality(int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must be in [1, 100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    QuantTables t;
    for (std::size_t i = 0; i < 64; ++i) {
        t.luma[i] = std::clamp((kBaseLuma[i] * scale + 50) / 100, 1, 255);
        t.chroma[i] = std::clamp((kBaseChroma[i] * scale + 50) / 100, 1, 255);
    }
    return t;
}

const std::array<std::array<double, 8>, 8>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, 8>, 8> b{};
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x) {
                const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
                b[static_cast<std::size_t>(u)][static_cast<std::size_t>(x)] =
                    cu / 2.0 * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
            }
        return b;
    }();
    return basis;
}

std::array<double, 64> forward_dct(const std::array<double, 64>& block) {
    const auto& d = dct_basis();
    std::array<double, 64> tmp{}, out{};
    for (int u = 0; u < 8; ++u)  // rows: tmp = D * B
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += d[u][y] * block[static_cast<std::size_t>(y * 8 + x)];
            tmp[static_cast<std::size_t>(u * 8 + x)] = s;
        }
    for (int u = 0; u < 8; ++u)  // out = tmp * D^T
        for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += tmp[static_cast<std::size_t>(u * 8 + x)] * d[v][x];
            out[static_cast<std::size_t>(u * 8 + v)] = s;
        }
    return out;
}

std::array<double, 64> inverse_dct(const std::array<double, 64>& coeffs) {
    const auto& d = dct_basis();
    std::array<double, 64> tmp{}, out{};
    for (int y = 0; y < 8; ++y)  // tmp = D^T * F
        for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int u = 0; u < 8; ++u) s += d[u][y] * coeffs[static_cast<std::size_t>(u * 8 + v)];
            tmp[static_cast<std::size_t>(y * 8 + v)] = s;
        }
    for (int y = 0; y < 8; ++y)  // out = tmp * D
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int v = 0; v < 8; ++v) s += tmp[static_cast<std::size_t>(y * 8 + v)] * d[v][x];
            out[static_cast<std::size_t>(y * 8 + x)] = s;
        }
    return out;
}

void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr) {
    y = 0.299 * r + 0.587 * g + 0.114 * b;
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
}

void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b) {
    r = y + 1.402 * (cr - 128.0);
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    b = y + 1.772 * (cb - 128.0);
}

std::vector<std::uint8_t> encode(const Image& rgb, const JpegConfig& cfg) {
    check_encodable(rgb);
    const QuantTables qt = quant_tables_for_quality(cfg.quality);
    const bool sub = cfg.subsampling == ChromaSubsampling::k420;
    const int mcu = sub ? 16 : 8;
    auto planes = color_planes_padded(rgb, mcu);
    Plane cb = sub ? downsample2x2(planes[1]) : planes[1];
    Plane cr = sub ? downsample2x2(planes[2]) : planes[2];

    std::vector<std::uint8_t> out{0xFF, 0xD8};
    // APP0 / JFIF 1.01, no thumbnail.
    out.insert(out.end(), {0xFF, 0xE0, 0x00, 0x10, 'J', 'F', 'I', 'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01,
                           0x00, 0x01, 0x00, 0x00});
    for (int id = 0; id < 2; ++id) {
        const Table8x8& t = id == 0 ? qt.luma : qt.chroma;
        out.insert(out.end(), {0xFF, 0xDB, 0x00, 0x43, static_cast<std::uint8_t>(id)});
        for (int k = 0; k < 64; ++k) out.push_back(static_cast<std::uint8_t>(t[static_cast<std::size_t>(kZigzag[static_cast<std::size_t>(k)])]));
    }
    out.insert(out.end(), {0xFF, 0xC0, 0x00, 0x11, 0x08});
    put_u16(out, rgb.height());
    put_u16(out, rgb.width());
    out.push_back(3);
    out.insert(out.end(), {1, static_cast<std::uint8_t>(sub ? 0x22 : 0x11), 0, 2, 0x11, 1, 3, 0x11, 1});
    write_dht(out, 0, 0, kDcLuma);
    write_dht(out, 1, 0, kAcLuma);
    write_dht(out, 0, 1, kDcChroma);
    write_dht(out, 1, 1, kAcChroma);
    out.insert(out.end(), {0xFF, 0xDA, 0x00, 0x0C, 3, 1, 0x00, 2, 0x11, 3, 0x11, 0x00, 0x3F, 0x00});

    static const auto dc_l = build_encoder_table(kDcLuma), ac_l = build_encoder_table(kAcLuma);
    static const auto dc_c = build_encoder_table(kDcChroma), ac_c = build_encoder_table(kAcChroma);
    BitWriter bw(out);
    int pred[3] = {0, 0, 0};
    auto encode_block = [&](const Plane& p, int bx, int by, const Table8x8& q, const std::array<Code, 256>& dc,
                            const std::array<Code, 256>& ac, int& prev) {
        const auto coeffs = quantize_block(forward_dct(block_at(p, bx, by)), q);
        const int diff = coeffs[0] - prev;
        prev = coeffs[0];
        const int cat = magnitude_category(diff);
        bw.put(dc[static_cast<std::size_t>(cat)].bits, dc[static_cast<std::size_t>(cat)].length);
        if (cat) bw.put(static_cast<std::uint32_t>(diff < 0 ? diff - 1 : diff) & ((1u << cat) - 1), cat);
        int run = 0;
        for (int k = 1; k < 64; ++k) {
            const int v = coeffs[static_cast<std::size_t>(kZigzag[static_cast<std::size_t>(k)])];
            if (v == 0) {
                ++run;
                continue;
            }
            while (run > 15) {
                bw.put(ac[0xF0].bits, ac[0xF0].length);
                run -= 16;
            }
            const int s = magnitude_category(v);
            const auto sym = static_cast<std::size_t>((run << 4) | s);
            bw.put(ac[sym].bits, ac[sym].length);
            bw.put(static_cast<std::uint32_t>(v < 0 ? v - 1 : v) & ((1u << s) - 1), s);
            run = 0;
        }
        if (run > 0) bw.put(ac[0].bits, ac[0].length);
    };

    const int mcux = planes[0].width / mcu, mcuy = planes[0].height / mcu;
    const int luma_blocks = sub ? 2 : 1;
    for (int my = 0; my < mcuy; ++my)
        for (int mx = 0; mx < mcux; ++mx) {
            for (int v = 0; v < luma_blocks; ++v)
                for (int h = 0; h < luma_blocks; ++h) {
                    encode_block(planes[0], mx * luma_blocks + h, my * luma_blocks + v, qt.luma, dc_l, ac_l, pred[0]);
                }
            encode_block(cb, mx, my, qt.chroma, dc_c, ac_c, pred[1]);
            encode_block(cr, mx, my, qt.chroma, dc_c, ac_c, pred[2]);
        }
    bw.flush();
    out.push_back(0xFF);
    out.push_back(0xD9);
    return out;
}

DecodedRgb8 decode_rgb8(std::span<const std::uint8_t> bytes) { return Decoder(bytes).run(); }

Image decode(std::span<const std::uint8_t> bytes) {
    const DecodedRgb8 d = decode_rgb8(bytes);
    Image img(d.height, d.width, 3);
    auto dst = img.data();
    for (std::size_t i = 0; i < d.pixels.size(); ++i) dst[i] = static_cast<float>(d.pixels[i] / 255.0);
    return img;
}

std::vector<std::array<double, 64>> luma_dct(const Image& rgb) {
    check_encodable(rgb);
    const auto planes = color_planes_padded(rgb, 8);
    std::vector<std::array<double, 64>> out;
    for (int by = 0; by < planes[0].height / 8; ++by)
        for (int bx = 0; bx < planes[0].width / 8; ++bx) out.push_back(forward_dct(block_at(planes[0], bx, by)));
    return out;
}

std::vector<std::array<int, 64>> luma_coefficients(const Image& rgb, const JpegConfig& cfg) {
    const QuantTables qt = quant_tables_for_quality(cfg.quality);
    std::vector<std::array<int, 64>> out;
    for (const auto& b : luma_dct(rgb)) out.push_back(quantize_block(b, qt.luma));
    return out;
}

}  // namespace mpijpeg::jpeg
