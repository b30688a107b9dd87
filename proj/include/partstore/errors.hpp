#pragma once

#include <stdexcept>
#include <string>

namespace partstore {

enum class ErrorCode {
    InvalidInput,
    AuthenticationFailure,
    DecryptionFailure,
    CapacityExceeded,
    InvalidSpec,
    InsufficientShares,
    DuplicateShareIndex,
    SchemeMismatch,
    InvalidRate,
    MissingPeerKey,
    NoPeers,
    OwnershipRejected,
    UnknownUser,
    ConfirmationRejected,
    NotAPeer,
    ReconstructionCorrupt,
    InvalidState,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_code_name(code)) +
                             (detail.empty() ? "" : ": " + detail)),
          code_(code) {}

    explicit Error(ErrorCode code) : Error(code, "") {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::AuthenticationFailure: return "AuthenticationFailure";
        case ErrorCode::DecryptionFailure: return "DecryptionFailure";
        case ErrorCode::CapacityExceeded: return "CapacityExceeded";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::InsufficientShares: return "InsufficientShares";
        case ErrorCode::DuplicateShareIndex: return "DuplicateShareIndex";
        case ErrorCode::SchemeMismatch: return "SchemeMismatch";
        case ErrorCode::InvalidRate: return "InvalidRate";
        case ErrorCode::MissingPeerKey: return "MissingPeerKey";
        case ErrorCode::NoPeers: return "NoPeers";
        case ErrorCode::OwnershipRejected: return "OwnershipRejected";
        case ErrorCode::UnknownUser: return "UnknownUser";
        case ErrorCode::ConfirmationRejected: return "ConfirmationRejected";
        case ErrorCode::NotAPeer: return "NotAPeer";
        case ErrorCode::ReconstructionCorrupt: return "ReconstructionCorrupt";
        case ErrorCode::InvalidState: return "InvalidState";
    }
    return "UnknownError";
}

} // namespace partstore
