use std::fmt::Write;

use super::Explanation;

const FALLBACK: &str = "No single similarity dimension stands out in this recommendation.";

fn phrase(dim: &str) -> &str {
    match dim {
        "geo" => "geographic location",
        "population" => "population size",
        "income" => "income level",
        "education" => "education level",
        "race" => "demographic makeup",
        "politics" => "political leaning",
        "scenes" => "cultural scene",
        "venues" => "mix of venues",
        "employment" => "employment rate",
        other => other,
    }
}

fn split_feature(name: &str) -> (&str, Option<bool>) {
    if let Some(d) = name.strip_suffix("_to_top") {
        (d, Some(true))
    } else if let Some(d) = name.strip_suffix("_to_bottom") {
        (d, Some(false))
    } else {
        (name, None)
    }
}

fn join_names(names: &[String], fallback: &str) -> String {
    match names {
        [] => fallback.to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// One sentence per top attribution. A negative weight on a `_to_top`
/// feature means closeness to liked places raises the score; a positive
/// weight on `_to_bottom` means distance from lower-ranked places does.
pub fn render_text(expl: &Explanation, region_name: &str, liked_names: &[String], top_n: usize) -> String {
    if top_n == 0 || expl.attributions.is_empty() {
        return FALLBACK.to_string();
    }
    let liked = join_names(liked_names, "the places you liked");
    let mut out = Vec::new();
    for a in expl.attributions.iter().take(top_n) {
        let (dim, to_top) = split_feature(&a.feature);
        let what = phrase(dim);
        let value = expl.raw_distances.get(&a.feature).copied().unwrap_or(f64::NAN);
        let sentence = match (to_top, a.weight < 0.0) {
            (Some(true), true) => format!(
                "{region_name} is similar to {liked} in {what} (distance {value:.3}), which raises its score."
            ),
            (Some(true), false) => format!(
                "{region_name} differs from {liked} in {what} (distance {value:.3}), and that contrast raises its score."
            ),
            (Some(false), false) => format!(
                "{region_name} is unlike the places you ranked lower in {what} (distance {value:.3}), which raises its score."
            ),
            (Some(false), true) => format!(
                "{region_name} resembles the places you ranked lower in {what} (distance {value:.3}), which the model does not hold against it."
            ),
            (None, _) => format!("{region_name} has {what} = {value:.3} (weight {:+.3}).", a.weight),
        };
        out.push(sentence);
    }
    out.join(" ")
}

/// Self-contained prompt asking a language model for a travel justification.
pub fn build_prompt(expl: &Explanation, region_name: &str, liked_names: &[String], disliked_names: &[String]) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "You are a travel assistant. Write a short, friendly justification (3 to 4 sentences) \
         for recommending {region_name} to a traveller, based on the evidence below."
    );
    let _ = writeln!(p);
    let _ = writeln!(p, "Places the traveller liked: {}.", join_names(liked_names, "none given"));
    if !disliked_names.is_empty() {
        let _ = writeln!(p, "Places the traveller ranked lower: {}.", join_names(disliked_names, ""));
    }
    let _ = writeln!(p);
    let _ = writeln!(
        p,
        "A local surrogate model explained the recommendation score. Each line gives a similarity \
         feature, its weight and {region_name}'s distance value. Features ending in \"to top\" measure \
         distance to liked places; features ending in \"to bottom\" measure distance to lower-ranked \
         places. A negative weight means a smaller distance raises the score."
    );
    for a in &expl.attributions {
        let value = expl.raw_distances.get(&a.feature).copied().unwrap_or(f64::NAN);
        let _ = writeln!(p, "- {}: weight {:+.4}, distance {:.4}", a.feature, a.weight, value);
    }
    let _ = writeln!(p, "Surrogate fit (weighted R^2): {:.3}", expl.surrogate_r2);
    let _ = writeln!(p);
    let _ = write!(
        p,
        "Focus on the strongest factors, describe them in plain language and do not quote the numbers."
    );
    p
}
