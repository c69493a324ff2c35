#include "ekila/binio.hpp"

#include <fstream>
#include <iterator>

namespace ekila::binio {

Bytes readFile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void writeFile(const std::filesystem::path& path, ByteView data) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
    // Write-then-rename so readers never observe a half-written artifact.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string readText(const std::filesystem::path& path) {
    Bytes b = readFile(path);
    return std::string(b.begin(), b.end());
}

void writeText(const std::filesystem::path& path, std::string_view text) {
    writeFile(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace ekila::binio
