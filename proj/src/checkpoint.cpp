#include "mammil/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mammil {

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("checkpoint: cannot open " + path + " for writing");
    std::ofstream idx(path + ".idx", std::ios::trunc);
    if (!idx) throw DataError("checkpoint: cannot open " + path + ".idx for writing");
    for (const auto& p : params) {
        write_string(bin, p.name);
        write_string(bin, p.component);
        write_u64(bin, p.tensor.shape().size());
        for (auto e : p.tensor.shape()) write_u64(bin, static_cast<std::uint64_t>(e));
        for (double v : p.tensor.data()) write_f64(bin, v);
        idx << p.name << "\n";
    }
    if (!bin || !idx) throw DataError("checkpoint: write to " + path + " failed");
}

std::vector<Parameter> load_checkpoint(const std::string& path) {
    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw DataError("checkpoint: cannot open " + path);
    std::vector<Parameter> params;
    while (true) {
        bin.peek();
        if (bin.eof()) break;
        Parameter p;
        p.name = read_string(bin);
        p.component = read_string(bin);
        const std::uint64_t ndim = read_u64(bin);
        Shape shape(ndim);
        for (auto& e : shape) e = static_cast<std::int64_t>(read_u64(bin));
        std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : data) v = read_f64(bin);
        if (!bin) throw DataError("checkpoint: truncated record in " + path);
        p.tensor = Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
        params.push_back(std::move(p));
    }
    return params;
}

}  // namespace mammil
