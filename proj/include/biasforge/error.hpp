#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace biasforge {

enum class ErrorKind {
    invalid_argument,
    config,
    io,
    empty_dataset,
    empty_class,
    insufficient_class_size,
    duplicate_path,
    unknown_class,
    missing_metadata,
    metadata_mismatch,
    class_set_mismatch,
    missing_pretrained,
    incomplete_predictions,
    insufficient_samples,
    k_too_large,
    corrupt_file,
    internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for an error category: 1 user/config, 2 data, 3 internal.
int exit_code_for(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace biasforge
