use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use jieba_rs::Jieba;

use crate::error::{Error, Result};

/// Text-to-token strategy used by BLEU and ROUGE.
#[derive(Clone)]
pub enum Tokenizer {
    /// Every non-whitespace character is a token.
    CharLevel,
    /// Whitespace-separated words.
    Whitespace,
    /// Dictionary word segmentation (jieba). `lexicon` records where the
    /// dictionary came from, `None` meaning the bundled one.
    Dictionary {
        segmenter: Arc<Jieba>,
        lexicon: Option<String>,
    },
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::CharLevel
    }
}

impl Tokenizer {
    /// Dictionary segmenter. With a lexicon path the file replaces the
    /// bundled dictionary; lines are `word [freq [tag]]`.
    pub fn dictionary(lexicon: Option<&Path>) -> Result<Self> {
        let segmenter = match lexicon {
            None => Jieba::new(),
            Some(path) => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                Jieba::with_dict(&mut BufReader::new(file))
                    .map_err(|e| Error::Config(format!("bad lexicon {}: {e}", path.display())))?
            }
        };
        Ok(Tokenizer::Dictionary {
            segmenter: Arc::new(segmenter),
            lexicon: lexicon.map(|p| p.display().to_string()),
        })
    }

    /// Parses `char`, `whitespace`, `jieba` or `jieba:<lexicon path>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        match spec {
            "char" | "char_level" => Ok(Tokenizer::CharLevel),
            "whitespace" | "ws" => Ok(Tokenizer::Whitespace),
            "jieba" | "dict" => Tokenizer::dictionary(None),
            other => match other
                .strip_prefix("jieba:")
                .or_else(|| other.strip_prefix("dict:"))
            {
                Some(path) => Tokenizer::dictionary(Some(Path::new(path))),
                None => Err(Error::Config(format!(
                    "unknown tokenizer `{other}` (valid: char, whitespace, jieba[:lexicon])"
                ))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Tokenizer::CharLevel => "char".to_string(),
            Tokenizer::Whitespace => "whitespace".to_string(),
            Tokenizer::Dictionary { lexicon: None, .. } => "jieba".to_string(),
            Tokenizer::Dictionary {
                lexicon: Some(path),
                ..
            } => format!("jieba:{path}"),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::CharLevel => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
            Tokenizer::Whitespace => text.split_whitespace().map(str::to_string).collect(),
            Tokenizer::Dictionary { segmenter, .. } => segmenter
                .cut(text, true)
                .into_iter()
                .map(|t| t.word.trim())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_no_tokens() {
        for t in [Tokenizer::CharLevel, Tokenizer::Whitespace] {
            assert!(t.tokenize("").is_empty());
        }
    }

    #[test]
    fn char_level_drops_whitespace() {
        assert_eq!(
            Tokenizer::CharLevel.tokenize("多喝 水"),
            vec!["多", "喝", "水"]
        );
    }

    #[test]
    fn custom_lexicon_segments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.txt");
        std::fs::write(&path, "多喝水 100\n注意 50\n休息 50\n").unwrap();
        let t = Tokenizer::dictionary(Some(&path)).unwrap();
        assert_eq!(t.tokenize("多喝水注意休息"), vec!["多喝水", "注意", "休息"]);
        assert!(t.tokenize("").is_empty());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(Tokenizer::from_spec("char").unwrap().name(), "char");
        assert!(Tokenizer::from_spec("bpe").is_err());
    }
}
