#pragma once

#include <string>

namespace forge {

class Pipeline;

struct ReportDocument {
    std::string html;
    std::string markdown;
};

// Requires the evaluate stage. `generated` is the only varying line.
ReportDocument render_report(Pipeline& pipeline, const std::string& generated);

} // namespace forge
