#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "consjudge/domain.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("consjudge-test-" + std::to_string((static_cast<unsigned long long>(rd()) << 32) | rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline consjudge::ResponseSet make_responses(std::initializer_list<std::string> texts) {
    consjudge::ResponseSet set;
    for (const auto& t : texts) {
        consjudge::CandidateResponse c;
        c.label_index = set.candidates.size();
        c.text = t;
        c.origin.model = "gen";
        set.candidates.push_back(c);
    }
    return set;
}

inline consjudge::JudgeTask make_task(const std::string& id, std::size_t m = 4) {
    consjudge::JudgeTask t;
    t.query = {id, "What is the capital of country " + id + "?", "test"};
    t.gt.answers = {"City " + id};
    for (std::size_t i = 0; i < m; ++i) {
        consjudge::CandidateResponse c;
        c.label_index = i;
        c.text = "Candidate " + std::to_string(i) + " for " + id;
        c.origin = {"gen-" + std::to_string(i), 0.5, std::nullopt, 0};
        t.responses.candidates.push_back(c);
    }
    return t;
}

}  // namespace testutil
