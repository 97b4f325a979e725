#include "fgc/fgc1.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace fgc::fgc1 {

namespace {

void put_u16(std::vector<unsigned char>& b, uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}
void put_u32(std::vector<unsigned char>& b, uint32_t v) {
    put_u16(b, static_cast<uint16_t>(v & 0xffff));
    put_u16(b, static_cast<uint16_t>(v >> 16));
}
uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

}  // namespace

uint32_t crc32(const unsigned char* data, size_t len) {
    static const std::array<uint32_t, 256> table = make_crc_table();
    uint32_t c = 0xffffffffu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

std::vector<unsigned char> encode(const Record& rec) {
    const size_t n = static_cast<size_t>(rec.dims[0]) * rec.dims[1];
    if (rec.data.size() != n) throw io_error("fgc1: dims do not match data size");
    std::vector<unsigned char> out;
    const size_t elem = rec.dtype == Dtype::f32 ? 4 : 8;
    out.reserve(16 + n * elem);
    out.push_back('F');
    out.push_back('G');
    out.push_back('C');
    out.push_back('1');
    out.push_back(static_cast<unsigned char>(rec.dtype));
    out.push_back(rec.rank);
    put_u32(out, rec.dims[0]);
    put_u32(out, rec.dims[1]);
    put_u16(out, 0);  // reserved
    const int64_t rows = rec.rows(), cols = rec.cols();
    for (int64_t c = 0; c < cols; ++c) {
        for (int64_t r = 0; r < rows; ++r) {
            const double v = rec.data[static_cast<size_t>(r * cols + c)];
            if (rec.dtype == Dtype::f32) {
                float f = static_cast<float>(v);
                uint32_t u;
                std::memcpy(&u, &f, 4);
                put_u32(out, u);
            } else {
                uint64_t u;
                std::memcpy(&u, &v, 8);
                put_u32(out, static_cast<uint32_t>(u & 0xffffffffu));
                put_u32(out, static_cast<uint32_t>(u >> 32));
            }
        }
    }
    return out;
}

Record decode(const unsigned char* bytes, size_t len, size_t* consumed) {
    if (len < 16 || std::memcmp(bytes, "FGC1", 4) != 0) throw io_error("fgc1: bad magic");
    Record rec;
    rec.dtype = static_cast<Dtype>(bytes[4]);
    if (rec.dtype != Dtype::f32 && rec.dtype != Dtype::f64) throw io_error("fgc1: bad dtype");
    rec.rank = bytes[5];
    if (rec.rank < 1 || rec.rank > 2) throw io_error("fgc1: bad rank");
    rec.dims[0] = get_u32(bytes + 6);
    rec.dims[1] = get_u32(bytes + 10);
    const size_t n = static_cast<size_t>(rec.dims[0]) * rec.dims[1];
    const size_t elem = rec.dtype == Dtype::f32 ? 4 : 8;
    if (len < 16 + n * elem) throw io_error("fgc1: truncated payload");
    rec.data.resize(n);
    const unsigned char* p = bytes + 16;
    const int64_t rows = rec.rows(), cols = rec.cols();
    for (int64_t c = 0; c < cols; ++c) {
        for (int64_t r = 0; r < rows; ++r) {
            double v;
            if (rec.dtype == Dtype::f32) {
                uint32_t u = get_u32(p);
                float f;
                std::memcpy(&f, &u, 4);
                v = static_cast<double>(f);
                p += 4;
            } else {
                uint64_t u = static_cast<uint64_t>(get_u32(p)) |
                             (static_cast<uint64_t>(get_u32(p + 4)) << 32);
                std::memcpy(&v, &u, 8);
                p += 8;
            }
            rec.data[static_cast<size_t>(r * cols + c)] = v;
        }
    }
    if (consumed) *consumed = 16 + n * elem;
    return rec;
}

void write_file(const std::string& path, const Record& rec) {
    std::vector<unsigned char> bytes = encode(rec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Record read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode(bytes.data(), bytes.size());
}

Record from_mat(const Mat& m, Dtype dtype) {
    Record rec;
    rec.dtype = dtype;
    rec.rank = 2;
    rec.dims[0] = static_cast<uint32_t>(m.rows);
    rec.dims[1] = static_cast<uint32_t>(m.cols);
    rec.data = m.v;
    return rec;
}

Record from_vector(const std::vector<double>& v, Dtype dtype) {
    Record rec;
    rec.dtype = dtype;
    rec.rank = 1;
    rec.dims[0] = static_cast<uint32_t>(v.size());
    rec.dims[1] = 1;
    rec.data = v;
    return rec;
}

Mat to_mat(const Record& rec) {
    Mat m(rec.rows(), rec.cols());
    m.v = rec.data;
    return m;
}

void write_csv(const std::string& path, const Mat& m) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write file: " + path);
    f.precision(9);
    for (int64_t r = 0; r < m.rows; ++r) {
        for (int64_t c = 0; c < m.cols; ++c) {
            if (c) f << ',';
            f << m.at(r, c);
        }
        f << '\n';
    }
}

// --- ZIP ---------------------------------------------------------------------

void zip_write(const std::string& path, const std::vector<ZipEntry>& entries) {
    std::vector<unsigned char> out;
    struct Central {
        std::string name;
        uint32_t crc, size, offset;
    };
    std::vector<Central> central;
    for (const auto& e : entries) {
        Central c;
        c.name = e.name;
        c.crc = crc32(e.data.data(), e.data.size());
        c.size = static_cast<uint32_t>(e.data.size());
        c.offset = static_cast<uint32_t>(out.size());
        central.push_back(c);
        put_u32(out, 0x04034b50);           // local file header
        put_u16(out, 20);                   // version needed
        put_u16(out, 0);                    // flags
        put_u16(out, 0);                    // method: store
        put_u16(out, 0);                    // mod time
        put_u16(out, 0x21);                 // mod date (1980-01-01)
        put_u32(out, c.crc);
        put_u32(out, c.size);               // compressed
        put_u32(out, c.size);               // uncompressed
        put_u16(out, static_cast<uint16_t>(e.name.size()));
        put_u16(out, 0);                    // extra length
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.insert(out.end(), e.data.begin(), e.data.end());
    }
    const uint32_t cd_start = static_cast<uint32_t>(out.size());
    for (const auto& c : central) {
        put_u32(out, 0x02014b50);
        put_u16(out, 20);
        put_u16(out, 20);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0x21);
        put_u32(out, c.crc);
        put_u32(out, c.size);
        put_u32(out, c.size);
        put_u16(out, static_cast<uint16_t>(c.name.size()));
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u32(out, 0);
        put_u32(out, c.offset);
        out.insert(out.end(), c.name.begin(), c.name.end());
    }
    const uint32_t cd_size = static_cast<uint32_t>(out.size()) - cd_start;
    put_u32(out, 0x06054b50);  // end of central directory
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, static_cast<uint16_t>(central.size()));
    put_u16(out, static_cast<uint16_t>(central.size()));
    put_u32(out, cd_size);
    put_u32(out, cd_start);
    put_u16(out, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write zip: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<ZipEntry> zip_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open zip: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 22) throw io_error("zip too small: " + path);
    // Find end-of-central-directory (no archive comment is written by us, but
    // scan backwards to stay tolerant).
    size_t eocd = std::string::npos;
    for (size_t i = buf.size() - 22;; --i) {
        if (get_u32(buf.data() + i) == 0x06054b50) {
            eocd = i;
            break;
        }
        if (i == 0) break;
    }
    if (eocd == std::string::npos) throw io_error("zip: missing end of central directory");
    const uint16_t count = get_u16(buf.data() + eocd + 10);
    uint32_t pos = get_u32(buf.data() + eocd + 16);
    std::vector<ZipEntry> entries;
    for (uint16_t i = 0; i < count; ++i) {
        if (pos + 46 > buf.size() || get_u32(buf.data() + pos) != 0x02014b50)
            throw io_error("zip: bad central directory entry");
        const uint16_t method = get_u16(buf.data() + pos + 10);
        const uint32_t crc = get_u32(buf.data() + pos + 16);
        const uint32_t csize = get_u32(buf.data() + pos + 20);
        const uint16_t name_len = get_u16(buf.data() + pos + 28);
        const uint16_t extra_len = get_u16(buf.data() + pos + 30);
        const uint16_t comment_len = get_u16(buf.data() + pos + 32);
        const uint32_t local_off = get_u32(buf.data() + pos + 42);
        std::string name(reinterpret_cast<const char*>(buf.data() + pos + 46), name_len);
        if (method != 0) throw io_error("zip: entry not stored (unsupported method): " + name);
        if (local_off + 30 > buf.size()) throw io_error("zip: bad local header offset");
        const uint16_t lname = get_u16(buf.data() + local_off + 26);
        const uint16_t lextra = get_u16(buf.data() + local_off + 28);
        const size_t data_off = local_off + 30 + lname + lextra;
        if (data_off + csize > buf.size()) throw io_error("zip: truncated entry: " + name);
        ZipEntry e;
        e.name = name;
        e.data.assign(buf.begin() + static_cast<std::ptrdiff_t>(data_off),
                      buf.begin() + static_cast<std::ptrdiff_t>(data_off + csize));
        if (crc32(e.data.data(), e.data.size()) != crc) throw io_error("zip: CRC mismatch: " + name);
        entries.push_back(std::move(e));
        pos += 46u + name_len + extra_len + comment_len;
    }
    return entries;
}

const ZipEntry* zip_find(const std::vector<ZipEntry>& entries, const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

}  // namespace fgc::fgc1
