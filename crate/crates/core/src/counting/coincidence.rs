use super::config::Matching;
use super::stream::EventStream;
use super::CountingError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceCount {
    pub count: u64,
    pub rate_hz: f64,
}

/// Counts coincidences between two sorted streams. Greedy matching walks `a`
/// in time order and pairs each event with the nearest still-unmatched event
/// of `b` within `window`; `AllPairs` counts every pair within the window.
pub fn count_coincidences(
    a: &EventStream,
    b: &EventStream,
    window: f64,
    matching: Matching,
) -> Result<CoincidenceCount, CountingError> {
    a.check_sorted()?;
    b.check_sorted()?;
    if !(window >= 0.0) {
        return Err(CountingError::InvalidParameter {
            name: "window",
            value: window,
        });
    }
    let tb = &b.timestamps;
    let mut used = vec![false; tb.len()];
    let mut start = 0;
    let mut count = 0u64;
    for &t in &a.timestamps {
        while start < tb.len() && tb[start] < t - window {
            start += 1;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut k = start;
        while k < tb.len() && tb[k] <= t + window {
            match matching {
                Matching::AllPairs => count += 1,
                Matching::Greedy if !used[k] => {
                    let d = (tb[k] - t).abs();
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
                Matching::Greedy => {}
            }
            k += 1;
        }
        if let Some((k, _)) = best {
            used[k] = true;
            count += 1;
        }
    }
    Ok(CoincidenceCount {
        count,
        rate_hz: count as f64 / a.duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::add_background;

    fn stream(ts: &[f64]) -> EventStream {
        EventStream {
            label: "s".into(),
            duration_s: 1.0,
            timestamps: ts.to_vec(),
        }
    }

    #[test]
    fn identical_streams_match_fully() {
        let s = add_background(&EventStream::empty("a", 1.0), 1e4, 1.0, 3).unwrap();
        let c = count_coincidences(&s, &s, 4e-9, Matching::Greedy).unwrap();
        assert_eq!(c.count as usize, s.len());
    }

    #[test]
    fn far_apart_streams_never_match() {
        let a = stream(&[0.1, 0.2, 0.3]);
        let b = stream(&[0.15, 0.25, 0.35]);
        assert_eq!(
            count_coincidences(&a, &b, 4e-9, Matching::Greedy)
                .unwrap()
                .count,
            0
        );
    }

    #[test]
    fn greedy_is_one_to_one_and_nearest() {
        // two herald clicks compete for one idler click
        let a = stream(&[1.0, 1.0 + 2e-9]);
        let b = stream(&[1.0 + 1e-9]);
        assert_eq!(
            count_coincidences(&a, &b, 4e-9, Matching::Greedy)
                .unwrap()
                .count,
            1
        );
        assert_eq!(
            count_coincidences(&a, &b, 4e-9, Matching::AllPairs)
                .unwrap()
                .count,
            2
        );
        // the first click takes its nearest partner (the later one), so the
        // second click finds nothing left in reach
        let a = stream(&[1.0, 1.0 + 4.5e-9]);
        let b = stream(&[1.0 - 3e-9, 1.0 + 1e-9]);
        assert_eq!(
            count_coincidences(&a, &b, 4e-9, Matching::Greedy)
                .unwrap()
                .count,
            1
        );
        let a = stream(&[1.0, 1.0 + 0.5e-9]);
        assert_eq!(
            count_coincidences(&a, &b, 4e-9, Matching::Greedy)
                .unwrap()
                .count,
            2
        );
    }

    #[test]
    fn window_edge_is_inclusive() {
        let a = stream(&[0.5]);
        let b = stream(&[0.75]);
        assert_eq!(
            count_coincidences(&a, &b, 0.25, Matching::Greedy)
                .unwrap()
                .count,
            1
        );
    }

    #[test]
    fn unsorted_input_is_contract_violation() {
        let a = stream(&[0.2, 0.1]);
        let b = stream(&[0.1]);
        assert!(matches!(
            count_coincidences(&a, &b, 1e-9, Matching::Greedy),
            Err(CountingError::Unsorted { index: 1, .. })
        ));
        assert!(count_coincidences(&b, &a, 1e-9, Matching::Greedy).is_err());
    }
}
