//! Template grammar over the closed vocabulary: caption generation from
//! scenes, parsing back to semantics, and rule-based paraphrasing.
//!
//! Parsing and instantiation walk the same pattern table, so every caption
//! the grammar emits parses back to the semantics it was built from.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::caption::{Caption, Vocabulary};
use crate::rng::stream;
use crate::{Error, Result};

use super::scene::{Color, SceneSpec, ShapeClass, Size};

/// What a caption asserts about a scene: a count of identically colored,
/// identically shaped objects, with an optional size attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptionSemantics {
    pub count: usize,
    pub color: Color,
    pub shape: ShapeClass,
    pub size: Option<Size>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pat {
    Lit(&'static str),
    ColorSlot,
    ShapeSingular,
    ShapePlural,
    CountSlot,
    SizeWord,
}

use Pat::{ColorSlot, CountSlot, Lit, ShapePlural, ShapeSingular, SizeWord};

/// The fixed template set. Index = template id.
const TEMPLATES: &[&[Pat]] = &[
    // singular, no size
    &[Lit("a"), ColorSlot, ShapeSingular],
    &[Lit("the"), ShapeSingular, Lit("is"), ColorSlot],
    // counting
    &[CountSlot, ColorSlot, ShapePlural],
    // singular with size
    &[Lit("a"), SizeWord, ColorSlot, ShapeSingular],
    // singular, framed
    &[Lit("a"), Lit("picture"), Lit("of"), Lit("a"), ColorSlot, ShapeSingular],
    &[Lit("an"), Lit("image"), Lit("of"), Lit("a"), ColorSlot, ShapeSingular],
    &[Lit("a"), Lit("photo"), Lit("of"), Lit("a"), ColorSlot, ShapeSingular],
    // counting, framed
    &[Lit("the"), CountSlot, ColorSlot, ShapePlural],
    &[Lit("a"), Lit("picture"), Lit("of"), CountSlot, ColorSlot, ShapePlural],
    &[Lit("an"), Lit("image"), Lit("of"), CountSlot, ColorSlot, ShapePlural],
    &[Lit("a"), Lit("photo"), Lit("of"), CountSlot, ColorSlot, ShapePlural],
    // singular with size, framed
    &[Lit("the"), SizeWord, ColorSlot, ShapeSingular],
    &[Lit("a"), Lit("picture"), Lit("of"), Lit("a"), SizeWord, ColorSlot, ShapeSingular],
    &[Lit("an"), Lit("image"), Lit("of"), Lit("a"), SizeWord, ColorSlot, ShapeSingular],
    &[Lit("a"), Lit("photo"), Lit("of"), Lit("a"), SizeWord, ColorSlot, ShapeSingular],
];

pub const TEMPLATE_COUNT: usize = TEMPLATES.len();

/// Synonym table for size words; index picks a variant.
fn size_words(size: Size) -> [&'static str; 2] {
    match size {
        Size::Small => ["small", "little"],
        Size::Large => ["large", "big"],
    }
}

fn parse_size_word(word: &str) -> Option<Size> {
    match word {
        "small" | "little" => Some(Size::Small),
        "large" | "big" => Some(Size::Large),
        _ => None,
    }
}

fn parse_color(word: &str) -> Option<Color> {
    Color::ALL.iter().copied().find(|c| c.word() == word)
}

fn parse_shape_singular(word: &str) -> Option<ShapeClass> {
    ShapeClass::ALL.iter().copied().find(|s| s.word() == word)
}

fn parse_shape_plural(word: &str) -> Option<ShapeClass> {
    ShapeClass::ALL.iter().copied().find(|s| s.plural() == word)
}

fn count_word(count: usize) -> &'static str {
    match count {
        2 => "two",
        3 => "three",
        _ => unreachable!("counting templates require 2..=3"),
    }
}

fn parse_count_word(word: &str) -> Option<usize> {
    match word {
        "two" => Some(2),
        "three" => Some(3),
        _ => None,
    }
}

fn template_is_plural(pattern: &[Pat]) -> bool {
    pattern.contains(&CountSlot)
}

fn template_has_size(pattern: &[Pat]) -> bool {
    pattern.contains(&SizeWord)
}

/// Render one template against semantics. `size_variant` (0 or 1) picks the
/// synonym for templates with a size slot.
fn instantiate(template_id: usize, sem: &CaptionSemantics, size_variant: usize) -> Result<String> {
    let pattern = TEMPLATES.get(template_id).ok_or_else(|| Error::Template {
        template: template_id,
        reason: format!("no such template (0..{TEMPLATE_COUNT})"),
    })?;
    let plural = template_is_plural(pattern);
    if plural && sem.count < 2 {
        return Err(Error::Template {
            template: template_id,
            reason: "counting template needs at least two matching objects".into(),
        });
    }
    if !plural && sem.count != 1 {
        return Err(Error::Template {
            template: template_id,
            reason: format!("singular template cannot describe {} matching objects", sem.count),
        });
    }
    let size = if template_has_size(pattern) {
        Some(sem.size.ok_or_else(|| Error::Template {
            template: template_id,
            reason: "template mentions a size the semantics does not carry".into(),
        })?)
    } else {
        None
    };
    let words: Vec<&str> = pattern
        .iter()
        .map(|p| match p {
            Lit(w) => *w,
            ColorSlot => sem.color.word(),
            ShapeSingular => sem.shape.word(),
            ShapePlural => sem.shape.plural(),
            CountSlot => count_word(sem.count),
            SizeWord => size_words(size.expect("checked above"))[size_variant % 2],
        })
        .collect();
    Ok(words.join(" "))
}

/// Caption a scene with a specific template. The caption talks about the
/// scene's primary group (the top-left-most object and its lookalikes);
/// a template whose arity does not match that group is rejected.
pub fn caption_of(vocab: &Vocabulary, scene: &SceneSpec, template_id: usize) -> Result<Caption> {
    let sem = scene_semantics(scene, template_id)?;
    let text = instantiate(template_id, &sem, 0)?;
    vocab.encode(&text)
}

fn scene_semantics(scene: &SceneSpec, template_id: usize) -> Result<CaptionSemantics> {
    let pattern = TEMPLATES.get(template_id).ok_or_else(|| Error::Template {
        template: template_id,
        reason: format!("no such template (0..{TEMPLATE_COUNT})"),
    })?;
    let primary = scene.primary();
    let group = scene.primary_group_count();
    let plural = template_is_plural(pattern);
    if plural && group < 2 {
        return Err(Error::Template {
            template: template_id,
            reason: "counting template needs at least two matching objects".into(),
        });
    }
    if !plural && group != 1 {
        return Err(Error::Template {
            template: template_id,
            reason: format!("scene has {group} matching objects, singular template rejected"),
        });
    }
    let count = if plural { group } else { 1 };
    Ok(CaptionSemantics {
        count,
        color: primary.color,
        shape: primary.shape,
        size: template_has_size(pattern).then_some(primary.size),
    })
}

/// Template ids compatible with a scene's primary group.
pub fn compatible_templates(scene: &SceneSpec) -> Vec<usize> {
    (0..TEMPLATE_COUNT).filter(|&id| scene_semantics(scene, id).is_ok()).collect()
}

/// A random compatible caption for a scene; used by dataset generation.
pub fn random_caption<R: Rng>(vocab: &Vocabulary, scene: &SceneSpec, rng: &mut R) -> Caption {
    let choices = compatible_templates(scene);
    let template_id = choices[rng.random_range(0..choices.len())];
    let sem = scene_semantics(scene, template_id).expect("template came from the compatible set");
    let variant = rng.random_range(0..2);
    let text = instantiate(template_id, &sem, variant).expect("semantics fit the template");
    vocab.encode(&text).expect("grammar output is in-vocabulary")
}

/// Parse a caption back to its semantics; rejects sentences outside the
/// template grammar with a diagnostic.
pub fn parse(caption: &Caption) -> Result<CaptionSemantics> {
    let words: Vec<String> =
        caption.tokens().iter().filter(|t| !t.starts_with('<')).cloned().collect();
    for pattern in TEMPLATES {
        if let Some(sem) = try_match(&words, pattern) {
            return Ok(sem);
        }
    }
    Err(Error::Parse {
        caption: caption.text(),
        reason: "no grammar template matches".into(),
    })
}

fn try_match(words: &[String], pattern: &[Pat]) -> Option<CaptionSemantics> {
    if words.len() != pattern.len() {
        return None;
    }
    let mut color = None;
    let mut shape = None;
    let mut size = None;
    let mut count = 1usize;
    for (word, pat) in words.iter().zip(pattern) {
        match pat {
            Lit(w) => {
                if word != w {
                    return None;
                }
            }
            ColorSlot => color = Some(parse_color(word)?),
            ShapeSingular => shape = Some(parse_shape_singular(word)?),
            ShapePlural => shape = Some(parse_shape_plural(word)?),
            CountSlot => count = parse_count_word(word)?,
            SizeWord => size = Some(parse_size_word(word)?),
        }
    }
    Some(CaptionSemantics { count, color: color?, shape: shape?, size })
}

/// All surface forms expressing `sem`, in canonical template order.
fn paraphrase_pool(vocab: &Vocabulary, sem: &CaptionSemantics) -> Vec<Caption> {
    let mut pool = Vec::new();
    for (id, pattern) in TEMPLATES.iter().enumerate() {
        let plural_ok = template_is_plural(pattern) == (sem.count >= 2);
        let size_ok = template_has_size(pattern) == sem.size.is_some();
        if !plural_ok || !size_ok {
            continue;
        }
        let variants = if template_has_size(pattern) { 2 } else { 1 };
        for variant in 0..variants {
            let text = instantiate(id, sem, variant).expect("pool templates are compatible");
            pool.push(vocab.encode(&text).expect("grammar output is in-vocabulary"));
        }
    }
    pool
}

/// `k` distinct captions with the same semantics as the input; the first is
/// the input itself, the rest are drawn deterministically from the synonym
/// and template pool.
pub fn paraphrase(vocab: &Vocabulary, caption: &Caption, k: usize, seed: u64) -> Result<Vec<Caption>> {
    if k == 0 {
        return Err(Error::Config("paraphrase requires k >= 1".into()));
    }
    let sem = parse(caption)?;
    let mut out = vec![caption.clone()];
    if k == 1 {
        return Ok(out);
    }
    let mut rest: Vec<Caption> =
        paraphrase_pool(vocab, &sem).into_iter().filter(|c| c != caption).collect();
    if rest.len() < k - 1 {
        return Err(Error::Config(format!(
            "cannot produce {k} distinct paraphrases; pool holds {}",
            rest.len() + 1
        )));
    }
    let mut rng = stream(seed, 0x7070);
    rest.shuffle(&mut rng);
    out.extend(rest.into_iter().take(k - 1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::scene::SceneObject;

    fn vocab() -> Vocabulary {
        Vocabulary::v1()
    }

    fn red_circle_scene() -> SceneSpec {
        SceneSpec::new(vec![SceneObject {
            shape: ShapeClass::Circle,
            color: Color::Red,
            cell: 5,
            size: Size::Small,
        }])
        .unwrap()
    }

    fn two_blue_squares() -> SceneSpec {
        let obj = |cell| SceneObject {
            shape: ShapeClass::Square,
            color: Color::Blue,
            cell,
            size: Size::Large,
        };
        SceneSpec::new(vec![obj(1), obj(6)]).unwrap()
    }

    #[test]
    fn template_zero_and_one() {
        let scene = red_circle_scene();
        assert_eq!(caption_of(&vocab(), &scene, 0).unwrap().text(), "a red circle");
        assert_eq!(caption_of(&vocab(), &scene, 1).unwrap().text(), "the circle is red");
    }

    #[test]
    fn counting_template() {
        let scene = two_blue_squares();
        assert_eq!(caption_of(&vocab(), &scene, 2).unwrap().text(), "two blue squares");
        // singular template incompatible with a two-object group
        assert!(caption_of(&vocab(), &scene, 0).is_err());
        // counting template incompatible with a single object
        assert!(caption_of(&vocab(), &red_circle_scene(), 2).is_err());
    }

    #[test]
    fn parse_inverts_every_template() {
        let scenes = [red_circle_scene(), two_blue_squares()];
        for scene in &scenes {
            for id in compatible_templates(scene) {
                let c = caption_of(&vocab(), scene, id).unwrap();
                let sem = parse(&c).unwrap();
                assert_eq!(sem.color, scene.primary().color, "template {id}");
                assert_eq!(sem.shape, scene.primary().shape, "template {id}");
            }
        }
    }

    #[test]
    fn paraphrase_identity_at_k1() {
        let v = vocab();
        let c = v.encode("a red circle").unwrap();
        let out = paraphrase(&v, &c, 1, 0).unwrap();
        assert_eq!(out, vec![c]);
    }

    #[test]
    fn paraphrases_share_semantics_and_start_verbatim() {
        let v = vocab();
        let c = v.encode("a red circle").unwrap();
        let out = paraphrase(&v, &c, 3, 9).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], c);
        let sem = parse(&c).unwrap();
        for p in &out {
            assert_eq!(parse(p).unwrap(), sem);
        }
        // distinct
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                assert_ne!(out[i], out[j]);
            }
        }
    }

    #[test]
    fn paraphrase_rejects_unparseable() {
        let v = vocab();
        let c = v.encode("red red red").unwrap();
        let err = paraphrase(&v, &c, 2, 0).unwrap_err();
        assert!(err.to_string().contains("no grammar template"));
    }

    #[test]
    fn size_synonyms_preserve_semantics() {
        let v = vocab();
        let big = v.encode("a big red circle").unwrap();
        let large = v.encode("a large red circle").unwrap();
        assert_eq!(parse(&big).unwrap(), parse(&large).unwrap());
        let pool = paraphrase(&v, &big, 5, 3).unwrap();
        assert_eq!(pool.len(), 5);
    }

    #[test]
    fn pool_supports_five_paraphrases_everywhere() {
        let v = vocab();
        for text in ["a red circle", "two blue squares", "a small green triangle"] {
            let c = v.encode(text).unwrap();
            assert!(paraphrase(&v, &c, 5, 1).is_ok(), "{text}");
        }
    }
}
