#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace docpack {

// Exit codes shared by the CLI and anything else that maps errors onto a
// process status.
enum class ErrorCategory { parse = 2, config = 3, packer = 4, io = 5 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class MalformedRecord : public Error {
public:
    explicit MalformedRecord(const std::string& detail)
        : Error(ErrorCategory::parse, "malformed record: " + detail) {}
};

class SchemaViolation : public Error {
public:
    explicit SchemaViolation(std::string field)
        : Error(ErrorCategory::parse, "schema violation: " + field), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class DanglingImageRef : public Error {
public:
    explicit DanglingImageRef(std::string image_id)
        : Error(ErrorCategory::parse, "dangling image reference: " + image_id),
          image_id_(std::move(image_id)) {}

    const std::string& image_id() const noexcept { return image_id_; }

private:
    std::string image_id_;
};

class EmptyManifest : public Error {
public:
    EmptyManifest() : Error(ErrorCategory::parse, "page manifest is empty") {}
};

class InvalidEncoding : public Error {
public:
    explicit InvalidEncoding(std::size_t offset)
        : Error(ErrorCategory::parse, "invalid UTF-8 at byte " + std::to_string(offset)),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class NoReviews : public Error {
public:
    explicit NoReviews(const std::string& doc_id)
        : Error(ErrorCategory::parse, "document has no reviews: " + doc_id) {}
};

class EmptyQAList : public Error {
public:
    EmptyQAList() : Error(ErrorCategory::parse, "external QA list is empty") {}
};

class StreamMismatch : public Error {
public:
    explicit StreamMismatch(const std::string& detail)
        : Error(ErrorCategory::parse, "stream mismatch: " + detail) {}
};

class AtomTooLarge : public Error {
public:
    AtomTooLarge(std::string sample_id, std::size_t atom_index, std::size_t length)
        : Error(ErrorCategory::packer,
                "atom " + std::to_string(atom_index) + " of sample '" + sample_id + "' has " +
                    std::to_string(length) + " tokens, more than the token threshold"),
          sample_id_(std::move(sample_id)),
          atom_index_(atom_index),
          length_(length) {}

    const std::string& sample_id() const noexcept { return sample_id_; }
    std::size_t atom_index() const noexcept { return atom_index_; }
    std::size_t length() const noexcept { return length_; }

private:
    std::string sample_id_;
    std::size_t atom_index_;
    std::size_t length_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& detail)
        : Error(ErrorCategory::config, "config error: " + detail) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& detail) : Error(ErrorCategory::io, "io error: " + detail) {}
};

}  // namespace docpack
