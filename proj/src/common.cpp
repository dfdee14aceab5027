#include "dualpath/common.hpp"

#include <cstring>
#include <fstream>
#include <system_error>

namespace dualpath {

void atomic_write_file(const std::filesystem::path& path, const void* data, std::size_t len) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open for write: " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) throw InputError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw InputError("rename failed: " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    atomic_write_file(path, bytes.data(), bytes.size());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    if (std::isfinite(v) && v == std::nearbyint(v) && std::fabs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return std::string(buf);
    }
    // %.17g round-trips; trim to the shortest representation that survives
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return std::string(buf);
}

}  // namespace dualpath
