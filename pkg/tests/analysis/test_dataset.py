import numpy as np
import pytest

from exodyad.analysis.dataset import DatasetLayout, PatientInfo, read_patients, write_patients
from exodyad.analysis.signals import TimeSeries, write_channel_csv
from exodyad.utils.exception import StructuralError
from exodyad.utils.types import Side


def make_layout(root, patients=('U1', 'U2'), conditions=('TEPI', 'LOW_ASSIST'), blocks=(1, 2)):
    write_patients(root / 'patients.csv', [PatientInfo(p, 60.0, Side.RIGHT) for p in patients])
    for patient in patients:
        for condition in conditions:
            for block in blocks:
                directory = root / patient / condition / f"block{block}"
                directory.mkdir(parents=True)
                write_channel_csv(directory / 'heart_rate.csv', TimeSeries(1.0, np.full(5, 100.0)))
    return DatasetLayout(root)


def test_patients_roundtrip(tmp_path):
    patients = [PatientInfo('U1', 61.0, Side.LEFT, sex='f', height_cm=165.0, body_weight_kg=60.5,
                            years_since_stroke=2.5, ssw_speed_mps=0.42),
                PatientInfo('U2', 48.0, Side.RIGHT)]
    write_patients(tmp_path / 'patients.csv', patients)
    assert list(read_patients(tmp_path / 'patients.csv').values()) == patients


def test_patients_errors_name_the_row(tmp_path):
    path = tmp_path / 'patients.csv'
    path.write_text('patient_id,age,paretic_side\nU1,60,left\nU1,55,right\n')
    with pytest.raises(StructuralError, match='row 3: duplicate'):
        read_patients(path)
    path.write_text('patient_id,age,paretic_side\nU1,sixty,left\n')
    with pytest.raises(StructuralError, match='row 2'):
        read_patients(path)
    path.write_text('patient_id,paretic_side\nU1,left\n')
    with pytest.raises(StructuralError, match='missing columns age'):
        read_patients(path)


def test_recordings_are_ordered(tmp_path):
    layout = make_layout(tmp_path)
    recordings = layout.recordings()
    assert len(recordings) == 8
    assert [(r.patient_id, r.condition, r.block) for r in recordings[:3]] == [
        ('U1', 'LOW_ASSIST', 1), ('U1', 'LOW_ASSIST', 2), ('U1', 'TEPI', 1)]
    assert len(layout.recordings('U2')) == 4
    heart_rate = recordings[0].heart_rate()
    assert heart_rate.sample_rate_hz == 1.0
    np.testing.assert_array_equal(heart_rate.samples, np.full(5, 100.0))
    assert recordings[0].heel_force(Side.LEFT) is None
    assert recordings[0].joint_angles() == {}


def test_unlisted_patient_directory(tmp_path):
    layout = make_layout(tmp_path, patients=('U1',))
    (tmp_path / 'U9' / 'TEPI' / 'block1').mkdir(parents=True)
    with pytest.raises(StructuralError, match='not listed'):
        layout.recordings()


def test_missing_manifest(tmp_path):
    assert not DatasetLayout.is_dataset(tmp_path)
    with pytest.raises(StructuralError, match='patients.csv'):
        DatasetLayout(tmp_path)


def test_ratings(tmp_path):
    layout = make_layout(tmp_path, patients=('U1',), conditions=('TEPI',))
    assert layout.ratings('U1', 'TEPI') == {}
    (tmp_path / 'U1' / 'TEPI' / 'blocks.csv').write_text('block,rpe_borg\n1,13\n2,15\n')
    assert layout.ratings('U1', 'TEPI') == {1: 13.0, 2: 15.0}
    (tmp_path / 'U1' / 'TEPI' / 'blocks.csv').write_text('block,rpe_borg\n1,hard\n')
    with pytest.raises(StructuralError, match='row 2'):
        layout.ratings('U1', 'TEPI')


def test_malformed_channel_names_the_file(tmp_path):
    layout = make_layout(tmp_path, patients=('U1',), conditions=('TEPI',), blocks=(1,))
    (tmp_path / 'U1' / 'TEPI' / 'block1' / 'heart_rate.csv').write_text('0,100\n1,101\n')
    with pytest.raises(StructuralError, match='heart_rate.csv'):
        layout.recordings()[0].heart_rate()
