#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fgc/common.hpp"

namespace fgc::fgc1 {

// 16-byte header: magic "FGC1", dtype u8 (0 = f32, 1 = f64), rank u8,
// dims u32 x 2 little-endian, 2 reserved bytes. Payload is column-major.
enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

struct Record {
    Dtype dtype = Dtype::f32;
    uint8_t rank = 2;        // 1 = vector (dims {n,1}), 2 = matrix {rows, cols}
    uint32_t dims[2] = {0, 0};
    std::vector<double> data;  // row-major in memory regardless of dtype on disk

    int64_t rows() const { return dims[0]; }
    int64_t cols() const { return dims[1]; }
};

std::vector<unsigned char> encode(const Record& rec);
Record decode(const unsigned char* bytes, size_t len, size_t* consumed = nullptr);

void write_file(const std::string& path, const Record& rec);
Record read_file(const std::string& path);

Record from_mat(const Mat& m, Dtype dtype = Dtype::f32);
Record from_vector(const std::vector<double>& v, Dtype dtype = Dtype::f32);
Mat to_mat(const Record& rec);

// One row per frame, columns comma-separated.
void write_csv(const std::string& path, const Mat& m);

// --- minimal store-only ZIP --------------------------------------------------

struct ZipEntry {
    std::string name;
    std::vector<unsigned char> data;
};

// Writes entries uncompressed with a standard central directory.
void zip_write(const std::string& path, const std::vector<ZipEntry>& entries);
std::vector<ZipEntry> zip_read(const std::string& path);
const ZipEntry* zip_find(const std::vector<ZipEntry>& entries, const std::string& name);

uint32_t crc32(const unsigned char* data, size_t len);

}  // namespace fgc::fgc1
