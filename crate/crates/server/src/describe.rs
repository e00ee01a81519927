//! Deterministic neighborhood descriptions built from region attributes.

use regionrec::{RegionRecord, TableSchema};

fn argmax(v: &[f64]) -> Option<usize> {
    (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j]).then(j.cmp(&i)))
}

fn label<'a>(names: &'a [String], v: &[f64]) -> &'a str {
    argmax(v).and_then(|i| names.get(i)).map_or("unknown", String::as_str)
}

fn leaning(share: f64) -> &'static str {
    match share {
        s if s >= 0.6 => "leans Democratic",
        s if s <= 0.4 => "leans Republican",
        _ => "is politically mixed",
    }
}

fn thousands(x: f64) -> String {
    let digits = format!("{:.0}", x.max(0.0));
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// One paragraph describing a neighborhood inside `city_name`.
pub fn neighborhood_description(region: &RegionRecord, city_name: &str, schema: &TableSchema) -> String {
    let a = &region.attributes;
    format!(
        "{name} in {city_name} has about {pop} residents and a median household income of ${income}. \
         {edu:.0}% of adults hold a bachelor's degree, and the area {lean} ({dem:.0}% Democratic vote share). \
         Its strongest cultural scene is {scene}, its most common venues are {venue}, \
         and the largest population group is {race}.",
        name = region.name,
        pop = thousands(a.population),
        income = thousands(a.median_income),
        edu = 100.0 * a.education_rate,
        lean = leaning(a.political_leaning),
        dem = 100.0 * a.political_leaning,
        scene = label(&schema.scene_dims, &a.scenes_vector),
        venue = label(&schema.venue_categories, &a.venue_type_distribution),
        race = label(&schema.race_categories, &a.racial_composition),
    )
}

/// The prompt a language model would receive to write the description.
pub fn description_prompt(region: &RegionRecord, city_name: &str, schema: &TableSchema) -> String {
    let a = &region.attributes;
    let pairs = |names: &[String], v: &[f64]| {
        names
            .iter()
            .zip(v)
            .map(|(n, x)| format!("{n} {x:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "Write a short, friendly description of the neighborhood {name} (ZIP {code}) in {city_name} \
         for a traveler, using only these facts.\n\
         - population: {pop:.0}\n\
         - median household income: {income:.0}\n\
         - bachelor's degree share: {edu:.3}\n\
         - Democratic vote share: {dem:.3}\n\
         - racial composition: {race}\n\
         - cultural scenes: {scenes}\n\
         - venue mix: {venues}\n",
        name = region.name,
        code = region.id.code(),
        pop = a.population,
        income = a.median_income,
        edu = a.education_rate,
        dem = a.political_leaning,
        race = pairs(&schema.race_categories, &a.racial_composition),
        scenes = pairs(&schema.scene_dims, &a.scenes_vector),
        venues = pairs(&schema.venue_categories, &a.venue_type_distribution),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0.0), "0");
        assert_eq!(thousands(999.0), "999");
        assert_eq!(thousands(1000.0), "1,000");
        assert_eq!(thousands(1234567.4), "1,234,567");
    }

    #[test]
    fn argmax_prefers_first_of_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn leaning_buckets() {
        assert_eq!(leaning(0.7), "leans Democratic");
        assert_eq!(leaning(0.5), "is politically mixed");
        assert_eq!(leaning(0.3), "leans Republican");
    }
}
