use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sevbandit_service::script::{random_session, run_with_crashes};

fn kill_points(seed: u64, len: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = sample(&mut rng, len, n).into_vec();
    points.sort_unstable();
    points
}

#[tokio::test]
async fn crashes_leave_no_trace() {
    let session = random_session(21, 500);
    let base = tempfile::tempdir().unwrap();
    let clean = run_with_crashes(&session, base.path(), 4, &[], false, &[]).await.unwrap();
    assert!(clean.dispatched.len() > 20, "session should exercise dispatch");

    for (trial, tear) in [(1, false), (2, true)] {
        let dir = tempfile::tempdir().unwrap();
        let kills = kill_points(trial, session.len(), 10);
        let crashed = run_with_crashes(&session, dir.path(), 4, &kills, tear, &kills).await.unwrap();
        let reference = run_with_crashes(&session, base.path().join(format!("ref{trial}")).as_path(), 4, &[], false, &kills)
            .await
            .unwrap();
        assert_eq!(crashed.observed.len(), 10);
        assert_eq!(crashed.observed, reference.observed, "trial {trial}: state right after each restart");
        assert_eq!(crashed.restarts, 10);
        assert_eq!(crashed.dispatched, clean.dispatched, "trial {trial}");
        assert_eq!(crashed.pending, clean.pending, "trial {trial}");
        assert_eq!(crashed.state, clean.state, "trial {trial}");
        assert_eq!(crashed.metrics, clean.metrics, "trial {trial}");
    }
}

#[tokio::test]
async fn recovery_without_checkpoints_replays_everything() {
    let session = random_session(8, 300);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let clean = run_with_crashes(&session, a.path(), 0, &[], false, &[]).await.unwrap();
    let crashed = run_with_crashes(&session, b.path(), 0, &kill_points(3, session.len(), 5), true, &[])
        .await
        .unwrap();
    assert_eq!(crashed.state, clean.state);
    assert_eq!(crashed.dispatched, clean.dispatched);
}

#[tokio::test]
async fn killing_right_after_start_is_harmless() {
    let session = random_session(2, 50);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let clean = run_with_crashes(&session, a.path(), 2, &[], false, &[]).await.unwrap();
    let crashed = run_with_crashes(&session, b.path(), 2, &[0, 1, 2, 3], true, &[]).await.unwrap();
    assert_eq!(crashed.state, clean.state);
    assert_eq!(crashed.pending, clean.pending);
}
