#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "ekila/binio.hpp"
#include "ekila/common.hpp"

namespace ekila::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = info ? std::string(info->test_suite_name()) + "." + info->name() : "ekila";
        for (char& c : name)
            if (c == '/') c = '_';
        path_ = std::filesystem::temp_directory_path() / ("ekila-test-" + name + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Runs f and asserts it throws an ekila::Error with the given code.
template <class F>
void expectError(ErrorCode code, F&& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << errorCodeName(code) << " but nothing was thrown";
    } catch (const Error& e) {
        EXPECT_EQ(errorCodeName(e.code()), errorCodeName(code)) << e.what();
    }
}

/// Overwrites the u32 version that follows a 5-byte magic in a binary artifact.
inline void setFileVersion(const std::filesystem::path& path, std::uint32_t version) {
    Bytes data = binio::readFile(path);
    for (int i = 0; i < 4; ++i) data.at(5 + i) = static_cast<std::uint8_t>(version >> (8 * i));
    binio::writeFile(path, data);
}

}  // namespace ekila::testing
