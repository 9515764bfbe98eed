use std::collections::VecDeque;

use super::{StopConfig, StopEvent, StopLocation};
use crate::geo::{haversine, LatLon};

/// DBSCAN cluster labels over `points` with Haversine distance `<= eps`.
/// Returns `None` for noise. Clusters are numbered in order of their first
/// member.
pub fn dbscan_labels(points: &[LatLon], eps: f64, min_points: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| haversine(points[i], points[j]) <= eps)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbours(i);
        if seeds.len() < min_points {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q].is_none() {
                labels[q] = Some(cluster);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let reach = neighbours(q);
            if reach.len() >= min_points {
                queue.extend(reach.into_iter().filter(|&r| !visited[r] || labels[r].is_none()));
            }
        }
    }
    labels
}

/// Groups one user's stop events into stop locations by DBSCAN over event
/// medoids.
///
/// With `min_points = 1` every event is a core point, so locations are the
/// connected components of the `eps_dbscan` neighbourhood graph. For larger
/// `min_points`, noise events become single-event locations so that every
/// event keeps a location.
pub fn cluster_stop_locations(events: &[StopEvent], cfg: &StopConfig) -> Vec<StopLocation> {
    let medoids: Vec<LatLon> = events.iter().map(StopEvent::medoid).collect();
    let labels = dbscan_labels(&medoids, cfg.eps_dbscan, cfg.min_points);

    // Location ids follow first appearance in event order; noise gets its own.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_cluster: Vec<Option<usize>> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match label {
            Some(c) => {
                if slot_of_cluster.len() <= *c {
                    slot_of_cluster.resize(*c + 1, None);
                }
                let slot = *slot_of_cluster[*c].get_or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[slot].push(i);
            }
            None => groups.push(vec![i]),
        }
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| StopLocation::from_events(id as u32, members.iter().map(|&i| events[i].clone()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(meters_north: f64, t: i64) -> StopEvent {
        let lat = 40.0 + meters_north / crate::geo::METERS_PER_DEGREE;
        StopEvent {
            user_id: "u".into(),
            medoid_lat: lat,
            medoid_lon: -74.0,
            start_time: t,
            end_time: t + 600,
            n_pings: 3,
            mean_lat: lat,
            mean_lon: -74.0,
        }
    }

    #[test]
    fn empty_input() {
        assert!(cluster_stop_locations(&[], &StopConfig::default()).is_empty());
    }

    #[test]
    fn single_event_single_location() {
        let locs = cluster_stop_locations(&[event(0.0, 0)], &StopConfig::default());
        assert_eq!(locs.len(), 1);
        assert_eq!(locs[0].member_events.len(), 1);
    }

    #[test]
    fn near_pair_and_far_single() {
        let events = [event(0.0, 0), event(30.0, 1000), event(500.0, 2000)];
        let locs = cluster_stop_locations(&events, &StopConfig::default());
        let sizes: Vec<_> = locs.iter().map(|l| l.member_events.len()).collect();
        assert_eq!(sizes, vec![2, 1]);
        assert_eq!(locs[1].member_events[0].start_time, 2000);
    }

    #[test]
    fn chains_link_through_intermediates() {
        let events = [event(0.0, 0), event(100.0, 1), event(50.0, 2)];
        let locs = cluster_stop_locations(&events, &StopConfig::default());
        assert_eq!(locs.len(), 1);
    }

    #[test]
    fn noise_becomes_singletons() {
        let cfg = StopConfig {
            min_points: 2,
            ..StopConfig::default()
        };
        let events = [event(0.0, 0), event(10.0, 1), event(900.0, 2)];
        let locs = cluster_stop_locations(&events, &cfg);
        assert_eq!(locs.len(), 2);
        assert_eq!(locs[1].member_events.len(), 1);
    }
}
