# pylint: disable=missing-module-docstring
from blendshape_diffusion.command import gen_data
from blendshape_diffusion.command import train_vae
from blendshape_diffusion.command import pretrain_adapter
from blendshape_diffusion.command import train_diffusion
from blendshape_diffusion.command import sample
from blendshape_diffusion.command import evaluate
from blendshape_diffusion.command import ablate
