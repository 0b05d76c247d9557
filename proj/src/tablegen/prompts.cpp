#include "digesttab/tablegen/prompts.hpp"

#include <algorithm>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/text.hpp"

namespace digesttab::tablegen::prompts {

const char* const kSystem =
    "You are an intelligent and precise assistant that can understand the contents of research papers. You are "
    "knowledgable on different fields and domains of science, in particular computer science. You are able to "
    "interpret research papers, create questions and answers, and compare multiple papers.";

const char* const kJointTable =
    R"(We would like you to build a table that has each paper as a row and, as each column, a dimension that compares between the papers. You will be given multiple papers labeled Paper 1, 2, and so on. You will be provided with the title and content of each paper. Please create a table that compares and contrasts the given papers. Make {col_num} dimensions which are phrases that can compare multiple papers, so that the table has {col_num} columns. The table should also have {paper_num} papers as rows. Return a JSON object of the following format:

```json
{json_format}
```
**Check that the table has {paper_num} papers as rows and {column_num} dimensions as columns.**.

[Paper Content]
{papers})";

const char* const kSchemaNoContext =
    R"(Imagine the following scenario: A user is making a table for a scholarly paper that contains information about multiple papers and compares these papers. To compare and contrast the papers, the user provides the title and content of each paper. Your task is the following: Given a list of papers, you should find aspects that are shared by the given research papers. Then, within each aspect, you should identify {num_columns} attributes that can be used to compare the given papers.

First, you should return the list of similar aspects as a Python list as follows: "["<similar aspect that all given papers shared>", ...]". Then, think of each aspect as the topic for the Related Work section of the user's paper. Finally, find attributes that can compare the given papers within the Related Work section. Return a JSON object in the following format:

```json
{
  "<attribute 1>": ["<comparable attribute within the aspect 1>", "<comparable attribute within the aspect 1>", ...],
  ...
}
```

[Paper Content]
{papers}

Please ensure that your response strictly follows the given format. Adherence to the specified structure is mandatory.)";

const char* const kSchemaCaption =
    R"(Imagine the following scenario: A user is making a table for a scholarly paper that contains information about multiple papers and compares these papers. To compare and contrast the papers, the user provides the title and content of each paper. To help you build the table, the user provides a caption of this table, which is referred to in the paper as additional information.

[Caption]
{caption}

{refs_block}Your task is the following: Given a list of papers and table caption, you should identify {num_columns} table columns to compare given research papers. Return a list in the following format:

```List
["<comparable attribute within the table caption>", "<comparable attribute within the table caption>", ...]
```

[Paper Content]
{papers}

Please ensure that your response strictly follows the given format. Adherence to the specified structure is mandatory.)";

const char* const kSchemaCaptionRefsBlock = "[In-text reference]\n{in_text_refs}\n\n";

const char* const kSchemaFewShot =
    R"(Imagine the following scenario: A user is making a table for a scholarly paper that contains information about multiple papers and compares these papers. To compare and contrast the papers, the user provides the title and content of each paper. To help you build the table, the user provides similar tables that you can refer to as follows:

{exemplars}

Your task is the following: Given a list of papers and table examples, you should identify {num_columns} table columns to compare given research papers. Return a list in the following format:

[List]
["<comparable attribute>", "<comparable attribute>", ...]
[List]

{papers}

Please ensure that your response strictly follows the given format. Adherence to the specified structure is mandatory.)";

const char* const kValue = R"(Answer a question using the provided scientific paper.

Your response should be a JSON object with the following fields:

- answer: The answer to the question. The answer should use concise language, but be comprehensive. Only provide answers that are objectively supported by the text in paper.

- excerpts: A list of one or more *EXACT* text spans extracted from the paper that support the answer. Return between at most ten spans, and no more that 800 words. Make sure to cover all aspects of the answer above.

If there is no answer, return an empty dictionary, i.e., '{}'.

Paper:
 { full_text }

Given the information above, please answer the question: "{ question }".)";

const char* const kDescribeCaption =
    "\nA user is making a table for a scholarly paper that contains information about multiple papers and compares "
    "these papers. \n"
    "This table contains a column called {column}. Please write a  brief definition for this column.\n\n"
    "Here is the caption for the table: {caption}.\n\n"
    "Definition: \n";

const char* const kDescribeCaptionWithRef =
    "\nA user is making a table for a scholarly paper that contains information about multiple papers and compares "
    "these papers. \n"
    "This table contains a column called {column}. Please write a  brief definition for this column.\n\n"
    "Here is the caption for the table: {caption}.\n\n"
    "Following is some additional information about this table: {in_text_ref}.\n\n"
    "Definition: \n";

const char* const kContextQuery = "Rewrite this description as a one-line question.";

const char* const kNoContextQuery = "From the provided paper full-text, can you extract {column}?";

const std::array<const char*, 4> kContextRetrySuffixes = {
    "Return a summary of this information",
    "Try to extract this information.",
    "Summarize information about this.",
    "What information can you find about this?",
};

const std::array<const char*, 4> kNoContextRetries = {
    "Extract information about {column} aspect from this paper.",
    "What information can you find about {column}?",
    "We want to create a table comparing papers. Extract the information from this paper that goes in the column "
    "called {column}.",
    "In a literature review table comparing multiple papers, what information from this paper would go under column "
    "{column}?",
};

const char* const kCaption =
    R"(The following {paper_num} papers appear together as the rows of one table that compares them.

[Paper Content]
{papers}

Write a short description that is consistent with all input papers and could serve as the caption of that table. Return only the caption, as a single paragraph.)";

const char* const kRewrite =
    R"(The JSON list below holds the values of the column "{column}" in a table comparing scientific papers, one value per paper. Rewrite every value to be shorter and more consistent in style with the others, for display in a table cell. Do not add information that is not in the value.

{values}

Return a JSON list of exactly {count} strings, in the same order.)";

const char* const kJointJsonFormat = R"({
  "Paper 1": {"<dimension 1>": "<value for paper 1>", "<dimension 2>": "<value for paper 1>", ...},
  "Paper 2": {"<dimension 1>": "<value for paper 2>", "<dimension 2>": "<value for paper 2>", ...},
  ...
})";

std::string format_reminder(int attempt) {
  return "\n\n(Retry " + std::to_string(attempt) +
         ": the previous response could not be used. Follow the requested format and counts exactly.)";
}

std::string fill(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& slots) {
  // single pass so substituted text is never re-scanned for placeholders
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool hit = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : slots) {
        std::string ph = "{" + key + "}";
        if (tmpl.compare(i, ph.size(), ph) == 0) {
          out += value;
          i += ph.size();
          hit = true;
          break;
        }
      }
    }
    if (!hit) out += tmpl[i++];
  }
  return out;
}

std::string render_papers(const std::vector<PaperRecord>& papers, std::size_t first_index) {
  std::string out;
  for (std::size_t i = 0; i < papers.size(); ++i) {
    if (i) out += "\n";
    out += "Paper " + std::to_string(first_index + i) + "\nTitle: " + papers[i].title +
           "\nAbstract: " + papers[i].abstract.value_or("") + "\n";
  }
  return out;
}

std::string render_in_text_refs(const std::vector<InTextReference>& refs) {
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i) out += "\n";
    out += refs[i].section + ": " + refs[i].text;
  }
  return out;
}

std::string render_exemplar(const ReviewTable& table) {
  nlohmann::ordered_json cols = nlohmann::ordered_json::object();
  std::vector<std::string> titles;
  for (const auto& key : table.row_keys) {
    const auto* p = table.paper(key);
    titles.push_back(p && !p->title.empty() ? p->title : key);
  }
  bool clash = std::find(table.aspects.begin(), table.aspects.end(), "Paper") != table.aspects.end();
  cols[clash ? "Paper (row)" : "Paper"] = titles;
  for (const auto& a : table.aspects) {
    std::vector<std::string> vals;
    for (const auto& v : table.column(a)) vals.push_back(v.text());
    cols[a] = vals;
  }
  return cols.dump();
}

}  // namespace digesttab::tablegen::prompts
