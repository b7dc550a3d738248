//! Text map format: one character per cell (`#` wall, `.` empty, `L` lava,
//! `G` goal, `S` start) followed by a metadata line
//! `@ max_steps=<int> discount=<float> seed=<int>`. Lines starting with `;`
//! are comments.

use super::{Coord, GridWorld, Terrain, WorldError};

pub fn parse_map(text: &str) -> Result<GridWorld, WorldError> {
    let mut rows: Vec<&str> = Vec::new();
    let mut meta: Option<&str> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('@') {
            if meta.is_some() {
                return Err(WorldError::BadMetadata("duplicate metadata line".into()));
            }
            meta = Some(rest);
        } else if meta.is_some() {
            return Err(WorldError::BadMetadata("grid rows after metadata line".into()));
        } else {
            rows.push(line);
        }
    }
    if rows.is_empty() {
        return Err(WorldError::EmptyMap);
    }

    let width = rows[0].chars().count();
    let height = rows.len();
    let mut cells = Vec::with_capacity(width * height);
    let mut start = None;
    for (y, row) in rows.iter().enumerate() {
        let found = row.chars().count();
        if found != width {
            return Err(WorldError::NonRectangular {
                row: y,
                found,
                expected: width,
            });
        }
        for (x, ch) in row.chars().enumerate() {
            let t = match ch {
                '#' => Terrain::Wall,
                '.' => Terrain::Empty,
                'L' => Terrain::Lava,
                'G' => Terrain::Goal,
                'S' => {
                    if start.replace(Coord::new(x, y)).is_some() {
                        return Err(WorldError::MultipleStarts);
                    }
                    Terrain::Empty
                }
                other => {
                    return Err(WorldError::UnknownChar {
                        ch: other,
                        row: y,
                        col: x,
                    })
                }
            };
            cells.push(t);
        }
    }
    let start = start.ok_or(WorldError::MissingStart)?;
    let (max_steps, discount, seed) = parse_metadata(meta.ok_or(WorldError::MissingMetadata)?)?;
    GridWorld::new(width, height, cells, start, max_steps, discount, seed)
}

fn parse_metadata(meta: &str) -> Result<(usize, f64, u64), WorldError> {
    let mut max_steps = None;
    let mut discount = None;
    let mut seed = None;
    for field in meta.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| WorldError::BadMetadata(format!("expected key=value, got {field:?}")))?;
        let bad = |e: &dyn std::fmt::Display| WorldError::BadMetadata(format!("{key}: {e}"));
        match key {
            "max_steps" => max_steps = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
            "discount" => discount = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
            _ => return Err(WorldError::BadMetadata(format!("unknown key {key:?}"))),
        }
    }
    match (max_steps, discount, seed) {
        (Some(m), Some(d), Some(s)) => Ok((m, d, s)),
        _ => Err(WorldError::BadMetadata(
            "max_steps, discount and seed are all required".into(),
        )),
    }
}

pub fn render_map(world: &GridWorld) -> String {
    let mut out = String::with_capacity((world.width() + 1) * (world.height() + 1) + 48);
    for y in 0..world.height() {
        for x in 0..world.width() {
            let c = Coord::new(x, y);
            out.push(if c == world.start() {
                'S'
            } else {
                match world.terrain(c) {
                    Terrain::Wall => '#',
                    Terrain::Empty => '.',
                    Terrain::Lava => 'L',
                    Terrain::Goal => 'G',
                }
            });
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "@ max_steps={} discount={} seed={}\n",
        world.max_steps(),
        world.discount(),
        world.seed()
    ));
    out
}

/// Canonical whitespace form of a map text: trimmed lines, no blank lines,
/// single-space separated metadata, trailing newline.
pub fn normalize_map_text(text: &str) -> String {
    let mut out = String::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with(';'))
    {
        if let Some(rest) = line.strip_prefix('@') {
            out.push('@');
            for field in rest.split_whitespace() {
                out.push(' ');
                out.push_str(field);
            }
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "#####\n#S..#\n#.L.#\n#..G#\n#####\n@ max_steps=20 discount=0.9 seed=0\n";

    #[test]
    fn transcribes_cells() {
        let w = parse_map(SMALL).unwrap();
        assert_eq!((w.width(), w.height()), (5, 5));
        assert_eq!(w.start(), Coord::new(1, 1));
        assert_eq!(w.goal(), Coord::new(3, 3));
        assert_eq!(w.terrain(Coord::new(2, 2)), Terrain::Lava);
        assert_eq!(w.terrain(Coord::new(1, 1)), Terrain::Empty);
        assert_eq!(w.max_steps(), 20);
        assert_eq!(w.discount(), 0.9);
    }

    #[test]
    fn render_round_trips() {
        let w = parse_map(SMALL).unwrap();
        assert_eq!(render_map(&w), SMALL);
        assert_eq!(parse_map(&render_map(&w)).unwrap(), w);
    }

    #[test]
    fn whitespace_is_normalized() {
        let messy = "\n  #####  \n#S..#\n\n#.L.#\n#..G#\n#####\n@   max_steps=20   discount=0.9 seed=0";
        let w = parse_map(messy).unwrap();
        assert_eq!(render_map(&w), normalize_map_text(messy));
    }

    #[test]
    fn comment_lines_are_skipped() {
        let commented = format!("; produced by a test\n{SMALL}; trailing note\n");
        assert_eq!(parse_map(&commented).unwrap(), parse_map(SMALL).unwrap());
        assert_eq!(normalize_map_text(&commented), SMALL);
    }

    #[test]
    fn error_cases() {
        let no_goal = SMALL.replace('G', ".");
        assert_eq!(parse_map(&no_goal), Err(WorldError::MissingGoal));
        assert_eq!(parse_map(&no_goal).unwrap_err().to_string(), "missing goal");
        let two_goals = SMALL.replace("#S..#", "#S.G#");
        assert_eq!(parse_map(&two_goals), Err(WorldError::MultipleGoals));
        let no_start = SMALL.replace('S', ".");
        assert_eq!(parse_map(&no_start), Err(WorldError::MissingStart));
        let two_starts = SMALL.replace("#.L.#", "#SL.#");
        assert_eq!(parse_map(&two_starts), Err(WorldError::MultipleStarts));
        let ragged = SMALL.replace("#.L.#", "#.L.##");
        assert!(matches!(
            parse_map(&ragged),
            Err(WorldError::NonRectangular { row: 2, .. })
        ));
        let unknown = SMALL.replace('L', "x");
        assert!(matches!(
            parse_map(&unknown),
            Err(WorldError::UnknownChar { ch: 'x', .. })
        ));
        let open = SMALL.replace("#..G#", "...G#");
        assert!(matches!(parse_map(&open), Err(WorldError::OpenBorder { x: 0, y: 3 })));
        let no_meta = SMALL.lines().take(5).collect::<Vec<_>>().join("\n");
        assert_eq!(parse_map(&no_meta), Err(WorldError::MissingMetadata));
        let bad_meta = SMALL.replace("discount=0.9", "discount=zero");
        assert!(matches!(parse_map(&bad_meta), Err(WorldError::BadMetadata(_))));
        let sealed = "#####\n#S.L#\n#.LL#\n#LLG#\n#####\n@ max_steps=20 discount=1 seed=0\n";
        assert_eq!(parse_map(sealed), Err(WorldError::Unsolvable));
    }
}
