import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from floorgraph.estimators import HouseLayoutGAN, MaskedGraphPretraining, check_diagrams, check_samples
from floorgraph.graph import BubbleDiagram
from floorgraph.synth import generate_corpus

SMALL_GAN = dict(channels=4, gte_blocks=2, head_channels=(8, 4), critic_channels=4, room_dim=16,
                 batch_size=4, max_steps=2)
SMALL_PRE = dict(encoder_blocks=2, decoder_blocks=1, channels=4, volume_size=8, steps=2, batch_size=4)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(6, 1, 2, 5)


def test_validation_helpers(corpus):
    assert check_diagrams(corpus) == [s.diagram for s in corpus]
    with pytest.raises(TypeError):
        check_diagrams(corpus[0].diagram)
    with pytest.raises(TypeError):
        check_diagrams([1, 2])
    with pytest.raises(ValueError):
        check_diagrams([])
    with pytest.raises(TypeError):
        check_samples([corpus[0].diagram])


def test_params_round_trip():
    est = HouseLayoutGAN(**SMALL_GAN)
    assert est.get_params()["gte_blocks"] == 2
    assert clone(est).get_params() == est.get_params()
    est.set_params(lambda2=0.0)
    assert est.lambda2 == 0.0
    with pytest.raises(NotFittedError):
        est.predict([BubbleDiagram([0, 1])])


def test_gan_fit_predict_score(corpus):
    est = HouseLayoutGAN(**SMALL_GAN).fit(corpus)
    assert len(est.history_) == 2
    layouts = est.predict(corpus)
    assert [len(r) for r in layouts] == [s.num_rooms for s in corpus]
    assert est.score(corpus) <= 0
    assert est.predict(corpus) == layouts


def test_pretraining_transform_and_export(corpus):
    pre = MaskedGraphPretraining(**SMALL_PRE).fit(corpus)
    feats = pre.transform(corpus)
    assert feats.shape == (len(corpus), 4 * 8 * 8)
    gan = HouseLayoutGAN(**SMALL_GAN, pretrained=pre).fit(corpus)
    assert gan.generator_ is not None
    with pytest.raises(NotFittedError):
        MaskedGraphPretraining().transform(corpus)
