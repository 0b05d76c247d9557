#pragma once

#include <array>
#include <string>
#include <vector>

#include "digesttab/core/model.hpp"

namespace digesttab::tablegen::prompts {

extern const char* const kSystem;

// Templates with {placeholder} slots, kept verbatim.
extern const char* const kJointTable;
extern const char* const kSchemaNoContext;
extern const char* const kSchemaCaption;
extern const char* const kSchemaCaptionRefsBlock;
extern const char* const kSchemaFewShot;
extern const char* const kValue;
extern const char* const kDescribeCaption;
extern const char* const kDescribeCaptionWithRef;
extern const char* const kContextQuery;
extern const char* const kNoContextQuery;
extern const std::array<const char*, 4> kContextRetrySuffixes;
extern const std::array<const char*, 4> kNoContextRetries;

// Prompts with no published wording.
extern const char* const kCaption;
extern const char* const kRewrite;
extern const char* const kJointJsonFormat;

/// Appended to a retry so it is a distinct request (and cache entry) from the failed one.
std::string format_reminder(int attempt);

/// Replaces every `{key}` in `tmpl`.
std::string fill(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& slots);

/// "Paper i" blocks with title and abstract, numbered from `first_index`.
std::string render_papers(const std::vector<PaperRecord>& papers, std::size_t first_index = 1);

/// One "{section}: {text}" line per in-text reference.
std::string render_in_text_refs(const std::vector<InTextReference>& refs);

/// Compact JSON of a table's columns, rows labeled by paper title.
std::string render_exemplar(const ReviewTable& table);
inline constexpr const char* kExemplarFormat = "compact-json-v1";

}  // namespace digesttab::tablegen::prompts
