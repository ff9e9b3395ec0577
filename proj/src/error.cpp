#include "dpvis/error.hpp"

namespace dpvis {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::UnknownVariable: return "UnknownVariable";
        case Errc::NonNumericValue: return "NonNumericValue";
        case Errc::InvalidValue: return "InvalidValue";
        case Errc::SubjectWithNoVisits: return "SubjectWithNoVisits";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::NoFeasiblePath: return "NoFeasiblePath";
        case Errc::FoldTooSmall: return "FoldTooSmall";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::EmptyQuery: return "EmptyQuery";
        case Errc::InvalidQuery: return "InvalidQuery";
        case Errc::UnknownState: return "UnknownState";
        case Errc::UnknownSubgroup: return "UnknownSubgroup";
        case Errc::UnknownModel: return "UnknownModel";
        case Errc::UnknownSubject: return "UnknownSubject";
        case Errc::UnknownJob: return "UnknownJob";
        case Errc::Conflict: return "Conflict";
        case Errc::InvalidFilterAst: return "InvalidFilterAST";
        case Errc::EmptyScope: return "EmptyScope";
        case Errc::UnknownEvent: return "UnknownEvent";
        case Errc::EmptyAges: return "EmptyAges";
        case Errc::NoActiveModel: return "NoActiveModel";
        case Errc::NoDataset: return "NoDataset";
        case Errc::InvalidJson: return "InvalidJson";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace dpvis
