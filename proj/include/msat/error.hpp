#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msat {

enum class Errc {
    // midi
    MalformedHeader,
    SmpteDivisionUnsupported,
    TruncatedChunk,
    VlqOverflow,
    // ingest
    TooFewSongs,
    // representation
    VocabularyOverflow,
    MalformedSequence,
    LengthMismatch,
    // neural core
    CodeOutOfRange,
    NonFiniteActivation,
    ShapeMismatch,
    GraphMismatch,
    // training
    DivergenceDetected,
    EmptyCorpus,
    FreezeViolation,
    // generation
    PromptTooLong,
    WrongFusionMode,
    InvalidTask,
    // metrics
    PairingMismatch,
    // plumbing
    Config,
    Checkpoint,
    Io,
};

constexpr std::string_view errc_name(Errc e) {
    switch (e) {
        case Errc::MalformedHeader: return "MalformedHeader";
        case Errc::SmpteDivisionUnsupported: return "SmpteDivisionUnsupported";
        case Errc::TruncatedChunk: return "TruncatedChunk";
        case Errc::VlqOverflow: return "VlqOverflow";
        case Errc::TooFewSongs: return "TooFewSongs";
        case Errc::VocabularyOverflow: return "VocabularyOverflow";
        case Errc::MalformedSequence: return "MalformedSequence";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::CodeOutOfRange: return "CodeOutOfRange";
        case Errc::NonFiniteActivation: return "NonFiniteActivation";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::GraphMismatch: return "GraphMismatch";
        case Errc::DivergenceDetected: return "DivergenceDetected";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::FreezeViolation: return "FreezeViolation";
        case Errc::PromptTooLong: return "PromptTooLong";
        case Errc::WrongFusionMode: return "WrongFusionMode";
        case Errc::InvalidTask: return "InvalidTask";
        case Errc::PairingMismatch: return "PairingMismatch";
        case Errc::Config: return "Config";
        case Errc::Checkpoint: return "Checkpoint";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace msat
