#pragma once

// Loading helpers for the on-disk test fixtures.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "docpack/pipeline.hpp"

namespace fixture {

inline std::string path(const std::string& name) { return std::string(DOCPACK_FIXTURES) + "/" + name; }

inline std::vector<docpack::Document> corpus() {
    std::ifstream in(path("corpus.jsonl"));
    auto r = docpack::ingest_corpus(in);
    if (!r.errors.empty()) throw std::runtime_error("fixture corpus has errors: " + r.errors.front().message);
    return r.documents;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh, empty scratch directory per test name.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("docpack-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixture
