#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stemlab {

/// Base of every error raised by the library. `category()` drives the CLI's
/// exit-code mapping.
class Error : public std::runtime_error {
public:
    enum class Category { Usage, Data, Provider };

    Error(Category category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(Category::Usage, what) {}
};

/// Malformed input file content; `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& msg)
        : Error(Category::Data, source + ":" + std::to_string(line) + ": " + msg),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateError : public Error {
public:
    explicit DuplicateError(const std::string& what) : Error(Category::Data, what) {}
};

class NotFound : public Error {
public:
    explicit NotFound(const std::string& what) : Error(Category::Data, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(Category::Data, what) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& what) : Error(Category::Data, what) {}
};

/// Failures talking to an LLM provider. Each carries the request identifier.
class ProviderError : public Error {
public:
    ProviderError(std::string request_id, const std::string& what)
        : Error(Category::Provider, "[" + request_id + "] " + what),
          request_id_(std::move(request_id)) {}

    const std::string& request_id() const noexcept { return request_id_; }

private:
    std::string request_id_;
};

class TransportError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

class AuthError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

class MalformedResponseError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

}  // namespace stemlab
