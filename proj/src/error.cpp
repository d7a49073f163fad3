#include "biasforge/error.hpp"

namespace biasforge {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "InvalidArgument";
        case ErrorKind::config: return "ConfigError";
        case ErrorKind::io: return "IoError";
        case ErrorKind::empty_dataset: return "EmptyDataset";
        case ErrorKind::empty_class: return "EmptyClass";
        case ErrorKind::insufficient_class_size: return "InsufficientClassSize";
        case ErrorKind::duplicate_path: return "DuplicatePath";
        case ErrorKind::unknown_class: return "UnknownClass";
        case ErrorKind::missing_metadata: return "MissingMetadata";
        case ErrorKind::metadata_mismatch: return "MetadataMismatch";
        case ErrorKind::class_set_mismatch: return "ClassSetMismatch";
        case ErrorKind::missing_pretrained: return "MissingPretrained";
        case ErrorKind::incomplete_predictions: return "IncompletePredictions";
        case ErrorKind::insufficient_samples: return "InsufficientSamples";
        case ErrorKind::k_too_large: return "KTooLarge";
        case ErrorKind::corrupt_file: return "CorruptFile";
        case ErrorKind::internal: return "InternalError";
    }
    return "Unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument:
        case ErrorKind::config:
        case ErrorKind::k_too_large:
        case ErrorKind::missing_pretrained:
            return 1;
        case ErrorKind::internal:
            return 3;
        default:
            return 2;
    }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace biasforge
