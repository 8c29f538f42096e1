from rest_framework import serializers

from snn.model.spec import PRESETS
from snn.quantizer import EXPONENTIAL, UNIFORM

from .models import EpochMetric, RunRecord

MODES = [choice for choice, _ in RunRecord.MODES]
PTQ_MODES = ('ptq_w', 'ptq_s', 'ptq_ws')
DATASETS = ('fmnist', 'synthetic', 'events')
LOSSES = ('ce_count', 'mse', 'ce_per_step')
# rate-coded event presets train on per-step rates; the rest on spike counts
PRESET_LOSSES = {'dvs': 'mse'}


class StrictKeysMixin:
    """Reject keys the serializer does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


class OverridesSerializer(StrictKeysMixin, serializers.Serializer):
    beta = serializers.FloatField(required=False, min_value=0.0, max_value=1.0)
    theta = serializers.FloatField(required=False, min_value=0.0)
    alpha = serializers.FloatField(required=False, min_value=0.0)
    dropout = serializers.FloatField(required=False, min_value=0.0, max_value=0.99)
    hidden = serializers.IntegerField(required=False, min_value=1)
    num_classes = serializers.IntegerField(required=False, min_value=2)
    input_shape = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False,
                                        min_length=1, max_length=3)
    in_features = serializers.IntegerField(required=False, min_value=1)


class SyntheticSerializer(StrictKeysMixin, serializers.Serializer):
    num_classes = serializers.IntegerField(min_value=2, default=4)
    input_size = serializers.IntegerField(min_value=1, default=64)
    train_samples = serializers.IntegerField(min_value=1, default=512)
    test_samples = serializers.IntegerField(min_value=1, default=256)
    low_rate = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.02)
    high_rate = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.6)


class ExperimentConfigSerializer(StrictKeysMixin, serializers.Serializer):
    dataset = serializers.ChoiceField(choices=DATASETS, default='fmnist')
    preset = serializers.ChoiceField(choices=PRESETS, default='tiny')
    overrides = OverridesSerializer(required=False)
    mode = serializers.ChoiceField(choices=MODES, default='fp32')
    n_bits = serializers.IntegerField(min_value=1, max_value=32, default=8)
    scheme = serializers.ChoiceField(choices=[UNIFORM, EXPONENTIAL, 'exp'], default=EXPONENTIAL)
    ratio = serializers.FloatField(default=2.0)
    epochs = serializers.IntegerField(min_value=0, default=3)
    patience = serializers.IntegerField(min_value=1, default=20)
    trials = serializers.IntegerField(min_value=1, default=1)
    seed = serializers.IntegerField(min_value=0, default=0)
    lr = serializers.FloatField(min_value=0.0, default=5e-4)
    lr_min = serializers.FloatField(min_value=0.0, default=0.0)
    batch_size = serializers.IntegerField(min_value=1, default=128)
    steps_train = serializers.IntegerField(min_value=1, default=25)
    steps_test = serializers.IntegerField(min_value=1, default=25)
    loss = serializers.ChoiceField(choices=LOSSES, required=False)
    correct_rate = serializers.FloatField(default=1.0)
    incorrect_rate = serializers.FloatField(default=0.0)
    train_subset = serializers.IntegerField(min_value=1, allow_null=True, default=10000)
    test_subset = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    calib_subset = serializers.IntegerField(min_value=1, default=1024)
    data_dir = serializers.CharField(allow_null=True, default=None)
    synthetic = SyntheticSerializer(required=False)
    train_events = serializers.CharField(allow_null=True, default=None)
    test_events = serializers.CharField(allow_null=True, default=None)
    source_checkpoint = serializers.CharField(allow_null=True, default=None)
    output_dir = serializers.CharField(allow_null=True, default=None)

    def validate_scheme(self, value):
        return EXPONENTIAL if value == 'exp' else value

    def validate_ratio(self, value):
        if value <= 1.0:
            raise serializers.ValidationError('Ratio must be greater than 1')
        return value

    def validate(self, data):
        mode = data.get('mode', 'fp32')
        data.setdefault('loss', PRESET_LOSSES.get(data.get('preset', 'tiny'), 'ce_count'))
        if mode in PTQ_MODES and not data.get('source_checkpoint'):
            raise serializers.ValidationError({'source_checkpoint': ['PTQ modes need a source checkpoint.']})
        if mode in ('qat_w', 'qat_squat', 'ptq_w', 'ptq_ws') and data.get('n_bits', 8) < 2:
            raise serializers.ValidationError({'n_bits': ['Weight quantization needs at least 2 bits.']})
        if mode in ('squat_s', 'qat_squat', 'ptq_s', 'ptq_ws') and data.get('n_bits', 8) > 16:
            raise serializers.ValidationError({'n_bits': ['State grids hold at most 16 bits.']})
        if data.get('lr_min', 0.0) > data.get('lr', 5e-4):
            raise serializers.ValidationError({'lr_min': ['Must not exceed lr.']})
        if not 0.0 <= data.get('incorrect_rate', 0.0) < data.get('correct_rate', 1.0) <= 1.0:
            raise serializers.ValidationError('Spike targets need 0 <= incorrect_rate < correct_rate <= 1.')
        if data.get('dataset') == 'events' and not (data.get('train_events') and data.get('test_events')):
            raise serializers.ValidationError({'train_events': ['The events dataset needs train and test files.']})
        return data


class EpochMetricSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochMetric
        fields = ['epoch', 'split', 'loss', 'accuracy', 'lr']


class RunRecordSerializer(serializers.ModelSerializer):
    mode_label = serializers.CharField(source='get_mode_display', read_only=True)

    class Meta:
        model = RunRecord
        fields = [
            'run_id', 'group', 'mode', 'mode_label', 'n_bits', 'scheme', 'trial', 'seed', 'config',
            'epochs_run', 'best_accuracy', 'best_epoch', 'wall_time', 'grid_snapshots', 'checkpoint_path',
        ]
        extra_kwargs = {
            'run_id': {'validators': []},
        }

    def validate(self, data):
        epochs = data.get('config', {}).get('epochs')
        if epochs is not None and data.get('epochs_run', 0) > epochs:
            raise serializers.ValidationError({'epochs_run': [f'Only {epochs} epochs were configured.']})
        return data
