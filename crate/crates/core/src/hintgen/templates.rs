//! The four prompt templates and placeholder substitution.
//!
//! Placeholders are literal tokens in the body (`{n}`, `<query>`, ...) rather
//! than a uniform syntax, because the bodies themselves contain braces and
//! angle-bracket tags that must pass through untouched.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    QueryGeneration,
    RelevanceAnnotation,
    HintGeneration,
    ChunkRanking,
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateName::QueryGeneration => "query_generation",
            TemplateName::RelevanceAnnotation => "relevance_annotation",
            TemplateName::HintGeneration => "hint_generation",
            TemplateName::ChunkRanking => "chunk_ranking",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placeholder {
    pub name: &'static str,
    pub token: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
    pub placeholders: &'static [Placeholder],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("no binding for placeholder {0:?}")]
    MissingBinding(String),
}

impl PromptTemplate {
    pub fn get(name: TemplateName) -> &'static PromptTemplate {
        match name {
            TemplateName::QueryGeneration => &QUERY_GENERATION,
            TemplateName::RelevanceAnnotation => &RELEVANCE_ANNOTATION,
            TemplateName::HintGeneration => &HINT_GENERATION,
            TemplateName::ChunkRanking => &CHUNK_RANKING,
        }
    }

    /// Substitutes every placeholder token in a single left-to-right pass, so
    /// bound values are never themselves rescanned.
    pub fn render(&self, bindings: &HashMap<&str, String>) -> Result<String, TemplateError> {
        for p in self.placeholders {
            if !bindings.contains_key(p.name) {
                return Err(TemplateError::MissingBinding(p.name.to_string()));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body;
        while !rest.is_empty() {
            let next = self
                .placeholders
                .iter()
                .filter_map(|p| rest.find(p.token).map(|i| (i, p)))
                .min_by_key(|(i, p)| (*i, std::cmp::Reverse(p.token.len())));
            match next {
                Some((i, p)) => {
                    out.push_str(&rest[..i]);
                    out.push_str(&bindings[p.name]);
                    rest = &rest[i + p.token.len()..];
                }
                None => {
                    out.push_str(rest);
                    break;
                }
            }
        }
        Ok(out)
    }
}

pub fn render(name: TemplateName, bindings: &HashMap<&str, String>) -> Result<String, TemplateError> {
    PromptTemplate::get(name).render(bindings)
}

pub static QUERY_GENERATION: PromptTemplate = PromptTemplate {
    name: TemplateName::QueryGeneration,
    body: r#"You are an e-commerce search expert. Generate {n} distinct, natural search queries for {noun} as found in real online shopping behavior.

## Rules:
- Use superlative words: best, top, most popular, leading, etc.
- Make queries sound natural like actual customer searches
- Use the reference examples to generate queries with similar styles

## Reference examples for various categories
- most popular electric shavers
- best black coffee
- best hair dryer brush set
- best smart tv
- best mens blue jeans
- best toenail cutters
- top running shoes for men
- best action movies
- best switch games for kids
- leading teether for baby
- best pc strategy games
- top laundry sanitizer for babies
- best cartridge for hp printer
- most popular mens smart dress watches
- famous gps for hiking
- best usb speakers
- best stylish travel walking shoes for women
- top air purifier with reusable filter
- best selling romance novels
- best jacket for winter
- famous brand sunglasses
- best natural shampoo without chemicals

## Output
Return a Python list of {n} generated queries as strings, ordered by estimated search popularity (most popular first).

Your output: "#,
    placeholders: &[
        Placeholder {
            name: "n",
            token: "{n}",
        },
        Placeholder {
            name: "noun",
            token: "{noun}",
        },
    ],
};

pub static RELEVANCE_ANNOTATION: PromptTemplate = PromptTemplate {
    name: TemplateName::RelevanceAnnotation,
    body: r#"You are an expert e-commerce search evaluator. Your task is to assess the relevance between search queries and products, with special attention to superlative qualifiers like "best" or "top" in the queries.

## Understanding Superlative Product Queries
Superlative qualifiers in queries (like "best," "top," "most popular") indicate the user is seeking products that excel in specific dimensions:
- Quality superlatives ("best," "top," "finest"): Products with superior quality, performance, and features; typically premium or flagship offerings from respected brands
- Popularity superlatives ("most popular," "best-selling"): Products with widespread adoption, high sales volume, or strong social proof
- Rating superlatives ("highest rated," "best-reviewed"): Products with exceptional user or expert reviews
- Recognition superlatives ("leading," "famous"): Products or brands with established reputation and recognition
- Value superlatives ("best value," "top bang for buck"): Products offering optimal balance between price and quality/features
- Specialization superlatives ("best for X purpose," "top in Y environment"): Products that excel in specific use cases or contexts

## Evaluation Steps
1. Identify if the query contains superlative qualifiers (e.g., "best", "top", "greatest").
2. Determine if the product meets the query's basic category and functional requirements.
3. If superlatives are present, assess if the product is genuinely recognized as among the top-tier options in its category based on:
   - Brand reputation and market position
   - Sales data and market share (for popularity claims)
   - Professional reviews and expert opinions
   - User ratings and community sentiment
   - Feature set and specifications relative to competitors
   - Quality of materials and construction
   - Price-to-performance ratio and value proposition
   - Special features that address niche requirements
   - Historical significance or innovation in the category
   - Awards, certifications, or industry recognition

## Relevance Categories
- "relevant and best": Product meets basic requirements AND genuinely excels in at least one dimension implied by the superlative qualifier (not necessarily all dimensions). This could be through superior features, exceptional brand reputation, market leadership, outstanding user ratings, or specialized excellence in the specific context implied by the query.
- "relevant but not best": Product meets basic requirements but doesn't stand out in any dimension implied by the superlative qualifier compared to competing products in the same category.
- "irrelevant": Product doesn't meet basic category or functional requirements of the query.

## Confidence Scoring Guidelines
When assigning a confidence score (0-100), consider:
- 80-100: High confidence - Clear evidence supports your assessment with minimal ambiguity
- 50-80: Moderate confidence - Some evidence exists but with limitations or potential counterarguments
- 0-50: Low confidence - Limited information, conflicting evidence, or high uncertainty

Factors affecting confidence include:
- Completeness of product information
- Clarity of the query's intent
- Availability of comparative data for superlative assessment
- Consistency of evidence across different evaluation factors

## Input Format
You will receive a list of query-product pairs. Each pair consists of a search query and a product description. The input will contain **<batch_size>** query-product pairs.

## Output Format
You MUST provide exactly **<batch_size>** evaluations in your output - one for each query-product pair in the input, maintaining their original order. Do not skip any pairs or combine evaluations.

Provide a list of dictionaries, one for each query-product pair, with each dictionary having the following format:
{
  "reasoning": "Your detailed analysis of whether the product meets basic requirements and how it performs against superlative expectations. Include specific product attributes, market positioning, and comparative assessment that support your conclusion.",
  "label": "relevant and best" or "relevant but not best" or "irrelevant",
  "confidence": [number between 0-100]
}

## Input
<input>

## Output"#,
    placeholders: &[
        Placeholder {
            name: "batch_size",
            token: "<batch_size>",
        },
        Placeholder {
            name: "input",
            token: "<input>",
        },
    ],
};

pub static HINT_GENERATION: PromptTemplate = PromptTemplate {
    name: TemplateName::HintGeneration,
    body: r#"# Brand and Feature Extraction from Superlative Queries with Synonyms
You are tasked with extracting relevant brands and features from user queries containing superlative terms (like "best," "top," "greatest," "most popular," etc.) to improve search result ranking for recommendation-seeking queries.

## Process
When presented with a superlative query, please:
1. Identify the product/service domain and specific category
2. Analyze what the superlative terms imply about user preferences (e.g., "best" might imply quality, "most popular" implies social proof)
3. Extract 5-10 most relevant brands, with confidence scores for each
4. Extract 5-10 most relevant features that would determine excellence in this category
5. Identify which brands are particularly known for excelling in these key features
6. For each feature, generate a list of synonyms and alternative phrasings to enable lexical matching

## Output Format
<analysis>
{
    "domain": "Product/service category",
    "ranking_intent": "Analysis of what the superlative qualifiers suggest about ranking criteria",
    "query_clarification": "Any ambiguities that might benefit from clarification"
}
</analysis>

<brands>
[
    {"name": "Brand 1", "confidence": 95},
    {"name": "Brand 2", "confidence": 90},
    # Include 5-10 brands total
]
</brands>

<features>
[
    {
        "name": "Feature 1",
        "synonyms": ["alternative term 1", "alternative term 2", "similar phrase", "related concept"],
        "category": "physical|performance|convenience|aesthetic|...",
        "importance": 10,
        "brands_known_for": ["Brand X", "Brand Y"]
    },
    {
        "name": "Feature 2",
        "synonyms": ["alternative term 1", "alternative term 2", "similar phrase"],
        "category": "physical|performance|convenience|aesthetic|...",
        "importance": 9,
        "brands_known_for": ["Brand Z"]
    },
    # Include 5-10 features total, importance scale 1-10
]
</features>

<feature_coverage_queries>
[
    "Query incorporating ALL features using synonym set 1 for each feature",
    "Query incorporating ALL features using synonym set 2 for each feature",
    # Include 10 queries total
]
</feature_coverage_queries>

## Guidelines
- Focus specifically on superlative queries seeking "best," "top," "highest rated," "most popular" items
- Provide 5-10 brands and 5-10 features (more for common queries, fewer for niche ones)
- Assign confidence scores (0-100) to brands based on their relevance to the superlative query
- Categorize features and assign importance weights (1-10) based on how critical they are to achieving excellence in this category
- Generate exactly <num_queries> feature coverage queries where:
    - EACH query includes ALL identified features
    - Each query uses DIFFERENT synonyms for expressing the same features
    - Each query is phrased as a complete search query a user might type
    - Each query includes the core product/category concept from the original query
- Include common variations, industry-specific terminology, and consumer language in the synonyms
- For highly specialized queries, include closely related brands/alternatives
- Identify which brands are particularly known for excellence in which key features
- Format must be valid Python literal that can be parsed by ast.literal_eval

## Query
<query>

Your output: "#,
    placeholders: &[
        Placeholder {
            name: "num_queries",
            token: "<num_queries>",
        },
        Placeholder {
            name: "query",
            token: "<query>",
        },
    ],
};

pub static CHUNK_RANKING: PromptTemplate = PromptTemplate {
    name: TemplateName::ChunkRanking,
    body: r#"You are an expert e-commerce search evaluator. Your task is to identify the most relevant products from this subset for a given query, with particular attention to superlative qualifiers.

Query: <query>

Consider the following aspects when evaluating:
1. Relevance to the query's basic product/category requirement
2. Alignment with the superlative qualifier (e.g., "best", "top", "most popular")
3. Product features and how they relate to potential user intent
4. Brand reputation and popularity in the specific product category
5. Product reviews and ratings (if available)
6. Price point in relation to the query (if applicable)

IMPORTANT INSTRUCTIONS:
- Return the **2 most relevant products** from the list below
- For each product, provide a similarity score from 0-100 (where 100 means perfect match to query)
- **Try to avoid numbers ending in 0/5 AND repetitive scores.**
- Your scores should reflect ABSOLUTE relevance to the query, not just relative ranking within this subset
- This ensures scores can be compared across different product subsets
- You MUST ONLY include product IDs that appear in this subset's list
- Your response MUST be a valid Python dictionary containing product IDs and their similarity scores
- Answer concisely: **Limit reasoning/thinking step (before </think>) to 5 sentences or fewer**

Products:
<products>

OUTPUT FORMAT:
Return ONLY a Python dictionary with exactly 2 product IDs and their similarity scores (0-100), in descending order of relevance:
{
    "product_id_1": int,
    "product_id_2": int
}
"#,
    placeholders: &[
        Placeholder {
            name: "query",
            token: "<query>",
        },
        Placeholder {
            name: "products",
            token: "<products>",
        },
    ],
};
